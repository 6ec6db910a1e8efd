"""Command-line interface.

Exit codes: 0 success / allow, 1 deny or rejection (reason on stderr),
2 usage error.
"""

from __future__ import annotations

import sys

import click

from . import changes as ch
from .admin import AppointManager, IssueDirective, RevokeDirective, RevokeManager
from .bench import ChurnConfig, run_churn
from .errors import AdminError, ConstraintError, OurbacError
from .model import EngineConfig, ManagerRole
from .persist import encode_action
from .resolver import activate_role, authorized_roles, check_access, create_session, effective_permissions, ou_closure
from .safety import SafetyGoal, Unreachable, bounded_reach, containment_bound
from .store import Store

DEFAULT_STORE = ".ourbac"


def _fail(reason: str, message: str = "") -> None:
    click.echo(f"{reason}: {message}" if message else reason, err=True)
    sys.exit(1)


def _store(ctx: click.Context) -> Store:
    return Store(ctx.obj["store"])


def _load(ctx: click.Context):
    try:
        return _store(ctx).load()
    except OurbacError as exc:
        _fail(exc.code, str(exc))


@click.group()
@click.option("--store", "store", envvar="OURBAC_STORE", default=DEFAULT_STORE, show_default=True,
              type=click.Path(file_okay=False), help="Store directory (env OURBAC_STORE).")
@click.pass_context
def main(ctx: click.Context, store: str) -> None:
    """OU-RBAC policy engine."""
    ctx.ensure_object(dict)
    ctx.obj["store"] = store


@main.command()
@click.option("--rbac-manager", required=True, help="Principal id of the initial RBAC manager.")
@click.option("--store", "store_opt", type=click.Path(file_okay=False), help="Store directory.")
@click.option("--ou-role-inheritance/--no-ou-role-inheritance", default=True)
@click.option("--directive-mode/--no-directive-mode", default=True)
@click.option("--manager-ssd/--no-manager-ssd", default=True)
@click.pass_context
def init(ctx, rbac_manager, store_opt, ou_role_inheritance, directive_mode, manager_ssd):
    """Create a store holding the bootstrap state."""
    store = Store(store_opt or ctx.obj["store"])
    config = EngineConfig(ou_role_inheritance, directive_mode, manager_ssd)
    try:
        with store.locked():
            store.init(rbac_manager, config)
    except OurbacError as exc:
        _fail(exc.code, str(exc))
    click.echo(f"initialised {store.path}")


@main.group()
def admin():
    """Run one audited admin action (requires --as)."""


def _as_option(f):
    return click.option("--as", "principal", required=True, help="Acting principal.")(f)


def _submit(ctx: click.Context, principal: str, action: object) -> None:
    store = _store(ctx)
    with store.locked():
        engine = _load(ctx)
        first = len(engine.log)
        try:
            rec = engine.execute(principal, action)
        except AdminError as err:
            store.commit(engine, first)
            _fail(str(err))
        store.commit(engine, first)
    click.echo(f"{rec.verdict} seq={rec.seq} {encode_action(action)}")


def _simple(name: str, cls: type, *args: str, help: str = ""):
    def callback(principal, **kwargs):
        _submit(click.get_current_context(), principal, cls(**kwargs))

    for arg in reversed(args):
        callback = click.argument(arg)(callback)
    callback = _as_option(callback)
    admin.command(name, help=help or f"{cls.__name__}.")(callback)


_simple("add-user", ch.AddUser, "user")
_simple("delete-user", ch.DeleteUser, "user")
_simple("add-role", ch.AddRole, "role")
_simple("delete-role", ch.DeleteRole, "role")
_simple("add-perm", ch.AddPerm, "perm", "operation", "obj")
_simple("delete-perm", ch.DeletePerm, "perm")
_simple("grant-perm", ch.GrantPermToRole, "perm", "role")
_simple("revoke-perm", ch.RevokePermFromRole, "perm", "role")
_simple("assign-user-role", ch.AssignUserToRoleDirect, "user", "role")
_simple("revoke-user-role", ch.RevokeUserFromRoleDirect, "user", "role")
_simple("delete-ou", ch.DeleteOu, "ou")
_simple("assign-user-ou", ch.AssignUserToOu, "user", "ou")
_simple("remove-user-ou", ch.RemoveUserFromOu, "user", "ou")
_simple("move-user-ou", ch.MoveUserOu, "user", "source", "target")
_simple("assign-ou-role", ch.AssignOuToRole, "ou", "role")
_simple("revoke-ou-role", ch.RevokeOuFromRole, "ou", "role")
_simple("add-inheritance", ch.AddRoleInheritance, "senior", "junior")
_simple("remove-inheritance", ch.RemoveRoleInheritance, "senior", "junior")
_simple("remove-ssd", ch.RemoveSsd, "id")
_simple("remove-dsd", ch.RemoveDsd, "id")
_simple("revoke-directive", RevokeDirective, "directive")


def _pairs(items: tuple[str, ...], what: str) -> tuple[tuple[str, str], ...]:
    out = []
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.BadParameter(f"expected KEY=VALUE, got {item!r}", param_hint=what)
        out.append((key, value))
    return tuple(out)


@admin.command("edit-user")
@click.argument("user")
@click.argument("attrs", nargs=-1)
@_as_option
@click.pass_context
def edit_user(ctx, user, attrs, principal):
    """Replace a user's attributes with KEY=VALUE pairs."""
    _submit(ctx, principal, ch.EditUser(user, _pairs(attrs, "ATTRS")))


@admin.command("create-ou")
@click.argument("ou")
@click.option("--parent")
@click.option("--dept", help="Department label (subtree roots only).")
@_as_option
@click.pass_context
def create_ou(ctx, ou, parent, dept, principal):
    """Create an organizational unit."""
    _submit(ctx, principal, ch.CreateOu(ou, parent, dept))


def _sod_command(name: str, cls: type):
    @admin.command(name, help=f"{cls.__name__}: at most CARDINALITY-1 of ROLES together.")
    @click.argument("id")
    @click.argument("cardinality", type=int)
    @click.argument("roles", nargs=-1, required=True)
    @_as_option
    @click.pass_context
    def cmd(ctx, id, cardinality, roles, principal):
        _submit(ctx, principal, cls(id, frozenset(roles), cardinality))


_sod_command("add-ssd", ch.AddSsd)
_sod_command("add-dsd", ch.AddDsd)

_ROLE_CHOICE = click.Choice([r.value for r in ManagerRole])


@admin.command("appoint")
@click.argument("target")
@click.argument("role", type=_ROLE_CHOICE)
@click.option("--scope", help="Department label (ItCoordinator only).")
@_as_option
@click.pass_context
def appoint(ctx, target, role, scope, principal):
    """Appoint TARGET to a manager role."""
    _submit(ctx, principal, AppointManager(target, ManagerRole(role), scope))


@admin.command("dismiss")
@click.argument("target")
@click.argument("role", type=_ROLE_CHOICE)
@click.option("--scope")
@_as_option
@click.pass_context
def dismiss(ctx, target, role, scope, principal):
    """Revoke a manager role from TARGET."""
    _submit(ctx, principal, RevokeManager(target, ManagerRole(role), scope))


@admin.command("issue-directive")
@click.argument("variant", type=click.Choice(sorted(ch.CHANGE_TYPES)))
@click.argument("bindings", nargs=-1)
@_as_option
@click.pass_context
def issue_directive(ctx, variant, bindings, principal):
    """Authorise one VARIANT change, optionally pinning FIELD=VALUE."""
    _submit(ctx, principal, IssueDirective(variant, _pairs(bindings, "BINDINGS")))


@main.command()
@click.argument("what", type=click.Choice(["perms", "roles", "ous"]))
@click.argument("user")
@click.pass_context
def query(ctx, what, user):
    """Print a user's effective permissions, authorized roles or OU closure."""
    state = _load(ctx).state
    fn = {"perms": effective_permissions, "roles": authorized_roles, "ous": ou_closure}[what]
    try:
        result = fn(state, user)
    except ConstraintError as exc:
        _fail(exc.code, str(exc))
    click.echo(" ".join(sorted(result)))


def _session(state, user: str, activate: str):
    session = create_session(state, user)
    for role in sorted(filter(None, activate.split(","))):
        session = activate_role(state, session, role)
    return session


@main.command()
@click.option("--user", required=True)
@click.option("--activate", default="", help="Comma-separated roles to activate.")
@click.option("--op", "operation", required=True)
@click.option("--obj", required=True)
@click.pass_context
def check(ctx, user, activate, operation, obj):
    """Decide an access request in a fresh session."""
    state = _load(ctx).state
    try:
        session = _session(state, user, activate)
    except ConstraintError as exc:
        _fail(exc.code, str(exc))
    decision = check_access(state, session, operation, obj)
    if decision.allowed:
        click.echo("ALLOW")
        for edge in decision.reason:
            click.echo(f"  {edge}")
        return
    click.echo("DENY")
    _fail("Deny", decision.note)


@main.command()
@click.option("--user", required=True)
@click.option("--activate", default="", help="Comma-separated roles to activate.")
@click.pass_context
def session(ctx, user, activate):
    """Open a session and activate roles, enforcing DSD."""
    state = _load(ctx).state
    try:
        s = _session(state, user, activate)
    except ConstraintError as exc:
        _fail(exc.code, str(exc))
    click.echo(f"{s.id} {' '.join(sorted(s.active_roles))}".rstrip())


@main.group()
def audit():
    """Inspect the audit log."""


@audit.command("verify")
@click.pass_context
def audit_verify(ctx):
    """Check the digest chain and that replay reproduces the snapshot."""
    try:
        n = _store(ctx).verify()
    except OurbacError as exc:
        _fail(exc.code, str(exc))
    click.echo(f"ok {n} records")


@audit.command("show")
@click.pass_context
def audit_show(ctx):
    """Print the audit records."""
    for rec in _load(ctx).log:
        click.echo(rec.line)


@main.group()
def analyze():
    """Escalation-safety analysis."""


@analyze.command("reach")
@click.option("--as", "principals", required=True, multiple=True, help="Principal(s) to explore (repeatable).")
@click.option("--user", required=True)
@click.option("--perm", required=True)
@click.option("--depth", default=6, show_default=True, type=click.IntRange(min=0))
@click.option("--cap", default=200_000, show_default=True, type=click.IntRange(min=1))
@click.pass_context
def analyze_reach(ctx, principals, user, perm, depth, cap):
    """Search for an action sequence giving USER the permission PERM."""
    state = _load(ctx).state
    try:
        result = bounded_reach(state, principals, SafetyGoal(user, perm), depth, cap)
    except OurbacError as exc:
        _fail(exc.code, str(exc))
    if isinstance(result, Unreachable):
        click.echo(f"UNREACHABLE depth={result.depth} explored={result.explored}")
        return
    click.echo(f"WITNESS length={len(result)}")
    for principal, action in result.steps:
        click.echo(f"  {principal}\t{encode_action(action)}")


@analyze.command("bound")
@click.argument("coordinator")
@click.pass_context
def analyze_bound(ctx, coordinator):
    """Print the permissions a coordinator could ever confer."""
    state = _load(ctx).state
    try:
        bound = containment_bound(state, coordinator)
    except OurbacError as exc:
        _fail(exc.code, str(exc))
    click.echo(" ".join(sorted(bound)))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON churn configuration.")
@click.option("--mode", required=True, type=click.Choice(["flat", "ou"]))
@click.option("--csv", "as_csv", is_flag=True, help="Emit mode,metric,value rows.")
@click.option("--directive-mode/--no-directive-mode", default=True)
def bench(config_path, mode, as_csv, directive_mode):
    """Count administrative operations over a synthetic churn run."""
    try:
        config = ChurnConfig.load(config_path)
    except (ValueError, TypeError) as exc:
        raise click.BadParameter(str(exc), param_hint="--config") from None
    report = run_churn(config, mode, directive_mode)
    if as_csv:
        click.echo("mode,metric,value")
        for row in report.to_csv_rows():
            click.echo(row)
    else:
        click.echo(report.to_text(), nl=False)


if __name__ == "__main__":  # pragma: no cover
    main()
