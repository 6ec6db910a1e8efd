"""Administrative workload under flat user-role RBAC vs OU-RBAC.

Both modes drive a real :class:`~ourbac.engine.Engine` through the same
seeded enrollment / graduation / advancement stream and count executed
admin actions. Every student holds ``roles_per_student`` roles: the
course's core roles plus one role for the cohort's current level.

Flat mode: one central RBAC manager assigns every role to every student.
OU mode: managers scaffold OUs and roles once (under directives when
directive mode is on); department coordinators then only add users and
place them in their cohort OU.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

from .admin import AppointManager, IssueDirective
from .bulk import resolve_all
from .changes import (
    AddPerm, AddRole, AddUser, AssignOuToRole, AssignUserToOu, AssignUserToRoleDirect,
    CreateOu, DeleteUser, GrantPermToRole, RevokeOuFromRole, RevokeUserFromRoleDirect,
)
from .engine import Engine
from .model import EngineConfig, ManagerRole

CENTRAL = "admin"
PERM_MGR = "perm-manager"
ROLE_MGR = "role-manager"
OU_MGR = "ou-manager"


@dataclass(frozen=True)
class ChurnConfig:
    departments: int = 1
    courses_per_department: int = 1
    semesters: int = 1
    intake_per_course: int = 1
    graduate_fraction: Fraction = Fraction(0)
    roles_per_student: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "graduate_fraction", Fraction(self.graduate_fraction))
        for name in ("departments", "courses_per_department", "semesters", "intake_per_course", "roles_per_student"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")
        if not 0 <= self.graduate_fraction <= 1:
            raise ValueError("graduate_fraction must lie in [0, 1]")
        if not isinstance(self.seed, int):
            raise ValueError("seed must be an integer")

    @classmethod
    def from_mapping(cls, data: dict) -> ChurnConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown churn config keys: {sorted(unknown)}")
        data = dict(data)
        if "graduate_fraction" in data:
            data["graduate_fraction"] = Fraction(str(data["graduate_fraction"]))
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> ChurnConfig:
        return cls.from_mapping(json.loads(Path(path).read_text()))

    @property
    def students_per_cycle(self) -> int:
        return self.departments * self.courses_per_department * self.intake_per_course


@dataclass
class BenchReport:
    mode: str
    total_admin_ops: int = 0
    ops_by_principal: dict[str, int] = field(default_factory=dict)
    ops_by_variant: dict[str, int] = field(default_factory=dict)
    ops_by_phase: dict[str, int] = field(default_factory=dict)
    central_admin_share: Fraction = Fraction(0)
    students_enrolled: int = 0
    students_graduated: int = 0

    def to_text(self) -> str:
        lines = ["ourbac-bench v1", "## summary"]
        summary = {
            "central_admin_share": f"{self.central_admin_share.numerator}/{self.central_admin_share.denominator}",
            "mode": self.mode,
            "students_enrolled": self.students_enrolled,
            "students_graduated": self.students_graduated,
            "total_admin_ops": self.total_admin_ops,
        }
        lines += [f"{k}\t{v}" for k, v in sorted(summary.items())]
        for name in ("ops_by_phase", "ops_by_principal", "ops_by_variant"):
            lines.append(f"## {name}")
            lines += [f"{k}\t{v}" for k, v in sorted(getattr(self, name).items())]
        return "\n".join(lines) + "\n"

    def to_csv_rows(self) -> list[str]:
        rows = [
            f"{self.mode},total_admin_ops,{self.total_admin_ops}",
            f"{self.mode},central_admin_share,{float(self.central_admin_share):.6f}",
            f"{self.mode},students_enrolled,{self.students_enrolled}",
            f"{self.mode},students_graduated,{self.students_graduated}",
        ]
        for name, prefix in (("ops_by_phase", "phase"), ("ops_by_principal", "principal"), ("ops_by_variant", "variant")):
            rows += [f"{self.mode},{prefix}:{k},{v}" for k, v in sorted(getattr(self, name).items())]
        return rows


# -- event stream ---------------------------------------------------------

@dataclass(frozen=True)
class Course:
    dept: str
    id: str
    core_roles: tuple[str, ...]
    level_roles: tuple[str, ...]


def dept_label(d: int) -> str:
    return f"D{d:02d}"


def courses_for(config: ChurnConfig) -> list[Course]:
    out = []
    core = config.roles_per_student - 1
    for d in range(config.departments):
        for c in range(config.courses_per_department):
            cid = f"{dept_label(d)}.C{c:02d}"
            out.append(Course(
                dept=dept_label(d),
                id=cid,
                core_roles=tuple(f"r.{cid}.core{j}" for j in range(1, core + 1)),
                level_roles=tuple(f"r.{cid}.lvl{n}" for n in range(config.semesters)),
            ))
    return out


def churn_events(config: ChurnConfig):
    """Yield the mode-independent event stream.

    Events: ("graduate", student), ("advance", course, cohort, level),
    ("cohort", course, cohort), ("enroll", course, cohort, student),
    ("checkpoint", cycle). Graduation happens at the start of every cycle
    after the first.
    """
    rng = random.Random(config.seed)
    courses = courses_for(config)
    enrolled: dict[str, tuple[Course, str]] = {}
    cohorts: list[tuple[Course, str, int]] = []
    for cycle in range(config.semesters):
        if cycle > 0:
            pool = sorted(enrolled)
            k = int(config.graduate_fraction * len(pool))
            for student in sorted(rng.sample(pool, k)):
                del enrolled[student]
                yield ("graduate", student)
            survivors = {cohort for _, cohort in enrolled.values()}
            for course, cohort, start in cohorts:
                if cohort in survivors:
                    yield ("advance", course, cohort, cycle - start)
        for course in courses:
            cohort = f"ou.{course.id}.Y{cycle:02d}"
            cohorts.append((course, cohort, cycle))
            yield ("cohort", course, cohort)
            for n in range(config.intake_per_course):
                student = f"s.{course.id}.Y{cycle:02d}.{n:05d}"
                enrolled[student] = (course, cohort)
                yield ("enroll", course, cohort, student)
        yield ("checkpoint", cycle)


# -- drivers --------------------------------------------------------------

class _Driver:
    mode = ""

    def __init__(self, config: ChurnConfig, engine_config: EngineConfig):
        self.config = config
        self.engine = Engine.bootstrap(CENTRAL, engine_config)
        self.phase_counts: Counter = Counter()
        self.enrolled = 0
        self.graduated = 0
        self.students: set[str] = set()

    def run(self, principal: str, action: object, phase: str) -> None:
        self.engine.execute(principal, action)
        self.phase_counts[phase] += 1

    def handle(self, event: tuple) -> None:
        kind = event[0]
        if kind == "enroll":
            _, course, cohort, student = event
            self.enroll(course, cohort, student)
            self.students.add(student)
            self.enrolled += 1
        elif kind == "graduate":
            self.graduate(event[1])
            self.students.discard(event[1])
            self.graduated += 1
        elif kind == "advance":
            self.advance(*event[1:])
        elif kind == "cohort":
            self.new_cohort(*event[1:])

    def report(self) -> BenchReport:
        by_principal: Counter = Counter()
        by_variant: Counter = Counter()
        for rec in self.engine.log:
            if rec.executed:
                by_principal[rec.principal] += 1
                by_variant[type(rec.action).__name__] += 1
        total = sum(by_principal.values())
        state = self.engine.state
        central = sum(n for p, n in by_principal.items() if not state.holds(p, ManagerRole.IT_COORDINATOR))
        return BenchReport(
            mode=self.mode,
            total_admin_ops=total,
            ops_by_principal=dict(by_principal),
            ops_by_variant=dict(by_variant),
            ops_by_phase=dict(self.phase_counts),
            central_admin_share=Fraction(central, total) if total else Fraction(0),
            students_enrolled=self.enrolled,
            students_graduated=self.graduated,
        )


def _perm_for(role: str) -> str:
    return "p." + role[2:]


class FlatDriver(_Driver):
    mode = "flat"

    def scaffold(self, courses: list[Course]) -> None:
        for course in courses:
            for role in course.core_roles + course.level_roles:
                self.run(CENTRAL, AddPerm(_perm_for(role), "use", role), "scaffold")
                self.run(CENTRAL, AddRole(role), "scaffold")
                self.run(CENTRAL, GrantPermToRole(_perm_for(role), role), "scaffold")

    def new_cohort(self, course: Course, cohort: str) -> None:
        pass

    def enroll(self, course: Course, cohort: str, student: str) -> None:
        self.run(CENTRAL, AddUser(student), "student")
        for role in course.core_roles + course.level_roles[:1]:
            self.run(CENTRAL, AssignUserToRoleDirect(student, role), "student")

    def graduate(self, student: str) -> None:
        self.run(CENTRAL, DeleteUser(student), "student")

    def advance(self, course: Course, cohort: str, level: int) -> None:
        members = sorted(s for s in self.students if cohort == _cohort_of(s))
        for student in members:
            self.run(CENTRAL, RevokeUserFromRoleDirect(student, course.level_roles[level - 1]), "student")
            self.run(CENTRAL, AssignUserToRoleDirect(student, course.level_roles[level]), "student")


def _cohort_of(student: str) -> str:
    # s.<dept>.<course>.<Ynn>.<n> -> ou.<dept>.<course>.<Ynn>
    return "ou." + student[2:].rsplit(".", 1)[0]


def coordinator_for(dept: str) -> str:
    return f"coord.{dept}"


class OuDriver(_Driver):
    mode = "ou"

    def delegate(self, principal: str, action: object, phase: str) -> None:
        """Sub-manager structural change, preceded by a directive in directive mode."""
        if self.engine.state.config.directive_mode:
            bindings = tuple(
                (f.name, str(getattr(action, f.name)))
                for f in fields(action)
                if getattr(action, f.name) is not None
            )
            self.run(CENTRAL, IssueDirective(type(action).__name__, bindings), phase)
        self.run(principal, action, phase)

    def scaffold(self, courses: list[Course]) -> None:
        self.run(CENTRAL, AppointManager(PERM_MGR, ManagerRole.PERMISSION_MANAGER), "scaffold")
        self.run(CENTRAL, AppointManager(ROLE_MGR, ManagerRole.ROLE_MANAGER), "scaffold")
        self.run(CENTRAL, AppointManager(OU_MGR, ManagerRole.OU_MANAGER), "scaffold")
        depts = sorted({c.dept for c in courses})
        for dept in depts:
            self.delegate(OU_MGR, CreateOu(f"ou.{dept}", None, dept), "scaffold")
            self.run(OU_MGR, AppointManager(coordinator_for(dept), ManagerRole.IT_COORDINATOR, dept), "scaffold")
        for course in courses:
            self.delegate(OU_MGR, CreateOu(f"ou.{course.id}", f"ou.{course.dept}"), "scaffold")
            for role in course.core_roles + course.level_roles:
                self.delegate(PERM_MGR, AddPerm(_perm_for(role), "use", role), "scaffold")
                self.delegate(ROLE_MGR, AddRole(role), "scaffold")
                self.delegate(ROLE_MGR, GrantPermToRole(_perm_for(role), role), "scaffold")
            for role in course.core_roles:
                self.delegate(ROLE_MGR, AssignOuToRole(f"ou.{course.id}", role), "scaffold")

    def new_cohort(self, course: Course, cohort: str) -> None:
        self.delegate(OU_MGR, CreateOu(cohort, f"ou.{course.id}"), "scaffold")
        self.delegate(ROLE_MGR, AssignOuToRole(cohort, course.level_roles[0]), "scaffold")

    def enroll(self, course: Course, cohort: str, student: str) -> None:
        coord = coordinator_for(course.dept)
        self.run(coord, AddUser(student), "student")
        self.run(coord, AssignUserToOu(student, cohort), "student")

    def graduate(self, student: str) -> None:
        dept = student.split(".")[1]
        self.run(coordinator_for(dept), DeleteUser(student), "student")

    def advance(self, course: Course, cohort: str, level: int) -> None:
        self.delegate(ROLE_MGR, RevokeOuFromRole(cohort, course.level_roles[level - 1]), "cohort")
        self.delegate(ROLE_MGR, AssignOuToRole(cohort, course.level_roles[level]), "cohort")


_DRIVERS = {"flat": FlatDriver, "ou": OuDriver}


@dataclass
class ChurnResult:
    report: BenchReport
    engine: Engine


def simulate(config: ChurnConfig, mode: str, directive_mode: bool = True) -> ChurnResult:
    if mode not in _DRIVERS:
        raise ValueError(f"mode must be 'flat' or 'ou', got {mode!r}")
    driver = _DRIVERS[mode](config, EngineConfig(directive_mode=directive_mode))
    driver.scaffold(courses_for(config))
    for event in churn_events(config):
        driver.handle(event)
    return ChurnResult(driver.report(), driver.engine)


def run_churn(config: ChurnConfig, mode: str, directive_mode: bool = True) -> BenchReport:
    return simulate(config, mode, directive_mode).report


class EntitlementMismatch(AssertionError):
    pass


def run_both(config: ChurnConfig, directive_mode: bool = True) -> tuple[ChurnResult, ChurnResult]:
    """Run flat and OU mode in lockstep, checking entitlements at every checkpoint.

    Raises EntitlementMismatch if any student's effective permissions differ
    between the two engines after a semester's enrollment.
    """
    flat = FlatDriver(config, EngineConfig(directive_mode=directive_mode))
    ou = OuDriver(config, EngineConfig(directive_mode=directive_mode))
    courses = courses_for(config)
    flat.scaffold(courses)
    ou.scaffold(courses)
    for event in churn_events(config):
        flat.handle(event)
        ou.handle(event)
        if event[0] == "checkpoint":
            check_same_entitlements(flat.engine, ou.engine, sorted(flat.students), event[1])
    return ChurnResult(flat.report(), flat.engine), ChurnResult(ou.report(), ou.engine)


def check_same_entitlements(a: Engine, b: Engine, students: list[str], cycle: int = 0) -> int:
    pa = resolve_all(a.state).permission_sets()
    pb = resolve_all(b.state).permission_sets()
    for s in students:
        if pa.get(s) != pb.get(s):
            raise EntitlementMismatch(f"cycle {cycle}: {s} has {sorted(pa.get(s, ()))} vs {sorted(pb.get(s, ()))}")
        if not pa[s]:
            raise EntitlementMismatch(f"cycle {cycle}: {s} holds no permissions")
    return len(students)
