"""Congruence on terms: alpha-conversion and reordering of evaluated
declarations (used for comparison), plus normalization of values to
well-formed right-values and the well-formedness predicates for right-values
and stores."""

from __future__ import annotations

from typing import Optional

from .syntax import (
    Block,
    ClassTable,
    Decl,
    Expr,
    FieldAccess,
    FieldAssign,
    IntLit,
    IntType,
    MethodCall,
    New,
    Plus,
    Qualifier,
    RefType,
    StaticCall,
    Var,
    free_vars,
    is_evaluated,
    is_objstate,
    is_rightvalue,
    is_value,
)


class NameSupply:
    """Fresh names: base + '#' + counter.  '#' is not lexable in source, so
    generated names never collide with user-written ones."""

    def __init__(self, start: int = 0):
        self.counter = start

    def fresh(self, hint: str = "v") -> str:
        self.counter += 1
        base = hint.split("#", 1)[0] or "v"
        return f"{base}#{self.counter}"


# ---------------------------------------------------------------------------
# Well-formedness of right-values and stores
# ---------------------------------------------------------------------------


def connected_closure(decls: tuple, names: frozenset) -> tuple:
    """ds|X: the declarations (transitively) connected to the names in X."""
    index = {d.name: d for d in decls}
    keep = {x for x in names if x in index}
    changed = True
    while changed:
        changed = False
        for x in list(keep):
            for y in free_vars(index[x].init):
                if y in index and y not in keep:
                    keep.add(y)
                    changed = True
    return tuple(d for d in decls if d.name in keep)


def wf_rightvalue(rv: Expr) -> bool:
    if is_objstate(rv):
        return True
    if isinstance(rv, Block):
        if not rv.decls:
            return False
        if not (isinstance(rv.body, Var) or is_objstate(rv.body)):
            return False
        if not all(is_evaluated(d) for d in rv.decls):
            return False
        # no garbage: every local is (transitively) connected to the body
        if connected_closure(rv.decls, free_vars(rv.body)) != rv.decls:
            return False
        # int members hold literals (transient, substituted away); object
        # members are recursively well-formed
        return all(
            isinstance(d.init, IntLit) or wf_rightvalue(d.init)
            for d in rv.decls
        )
    return False


def all_mut(decls: tuple) -> bool:
    # lent declarations count as mut: lent-ness only restricts how the
    # reference may be used while typing, the stored reference is mutable
    return all(
        isinstance(d.dtype, RefType)
        and d.dtype.qualifier in (Qualifier.MUT, Qualifier.LENT)
        for d in decls
    )


def all_imm(decls: tuple) -> bool:
    return all(
        isinstance(d.dtype, RefType) and d.dtype.qualifier is Qualifier.IMM
        for d in decls
    )


def wf_store_decl(d: Decl) -> bool:
    """A single evaluated declaration as part of a well-formed store."""
    if isinstance(d.dtype, IntType):
        return False  # int declarations are transient (substituted away)
    q = d.dtype.qualifier
    if q is Qualifier.CAPSULE:
        return False  # capsule declarations are consumed, never stored
    if is_objstate(d.init):
        return True
    if isinstance(d.init, Block) and is_rightvalue(d.init):
        # a block right-value can only be associated to an imm reference,
        # and its local store must be all-mut and itself well-formed
        return (
            q is Qualifier.IMM
            and wf_rightvalue(d.init)
            and all_mut(d.init.decls)
            and wf_store(d.init.decls)
        )
    return False


def wf_store(decls: tuple) -> bool:
    return all(wf_store_decl(d) for d in decls)


# ---------------------------------------------------------------------------
# Value normalization (rules: new, body, garbage, block-elim, to fixpoint)
# ---------------------------------------------------------------------------


def _keeps_local_store(d: Decl) -> bool:
    """imm declarations hold their mutable sub-store encapsulated in a block
    right-value; their block initializers are not flattened."""
    return isinstance(d.dtype, RefType) and d.dtype.qualifier is Qualifier.IMM


def normalize_value(
    v: Expr, table: ClassTable, supply: Optional[NameSupply] = None
) -> Expr:
    """Normalize a value to a bare reference/literal or a well-formed
    right-value (modulo the store constraints enforced by reduction)."""
    if supply is None:
        supply = NameSupply()
    assert is_value(v), f"not a value: {v!r}"
    return _norm(v, table, supply)


def _norm(v: Expr, table: ClassTable, supply: NameSupply) -> Expr:
    if isinstance(v, (Var, IntLit)):
        return v
    if isinstance(v, New):
        args = tuple(_norm(a, table, supply) for a in v.args)
        hoisted = []
        refs = []
        fields = table.fields(v.cname) if v.cname in table else None
        for i, a in enumerate(args):
            if isinstance(a, (Var, IntLit)):
                refs.append(a)
            else:
                # rule new: a constructor argument must be a reference;
                # hoist it into a local of the field's declared type
                ftype = fields[i][0] if fields else None
                x = supply.fresh("a")
                hoisted.append(Decl(ftype, x, a))
                refs.append(Var(x))
        out: Expr = New(v.cname, tuple(refs), v.span)
        if hoisted:
            out = _norm(Block(tuple(hoisted), out), table, supply)
        return out
    if isinstance(v, Block):
        decls: list = []
        for d in v.decls:
            init = _norm(d.init, table, supply)
            if isinstance(init, Block) and not _keeps_local_store(d):
                # rule body: pull the inner local store into this block
                decls.extend(init.decls)
                init = init.body
            decls.append(Decl(d.dtype, d.name, init, d.span))
        body = _norm(v.body, table, supply)
        if isinstance(body, Block):
            decls.extend(body.decls)
            body = body.body
        # rule garbage: drop locals not connected to the body
        kept = connected_closure(tuple(decls), free_vars(body))
        if not kept:
            return body  # rule block-elim
        return Block(kept, body, v.span)
    raise AssertionError(f"not a value: {v!r}")


# ---------------------------------------------------------------------------
# Alpha/reorder canonical form
# ---------------------------------------------------------------------------


def _shape(e: Expr) -> tuple:
    """Name-insensitive structural key."""
    if isinstance(e, Var):
        return ("var",)
    if isinstance(e, IntLit):
        return ("int", e.value)
    if isinstance(e, FieldAccess):
        return ("get", e.fname, _shape(e.recv))
    if isinstance(e, FieldAssign):
        return ("set", e.fname, _shape(e.recv), _shape(e.value))
    if isinstance(e, MethodCall):
        return ("call", e.mname, _shape(e.recv)) + tuple(_shape(a) for a in e.args)
    if isinstance(e, StaticCall):
        return ("scall", e.cname, e.mname) + tuple(_shape(a) for a in e.args)
    if isinstance(e, New):
        return ("new", e.cname) + tuple(_shape(a) for a in e.args)
    if isinstance(e, Plus):
        return ("plus", _shape(e.left), _shape(e.right))
    if isinstance(e, Block):
        return (
            ("block",)
            + tuple(("decl", str(d.dtype), _shape(d.init)) for d in e.decls)
            + (_shape(e.body),)
        )
    raise TypeError(f"not an expression: {e!r}")


def _sort_run(run: list, block: Block) -> list:
    """Order a contiguous run of evaluated declarations canonically.

    Keys start from the name-insensitive shape and are refined twice with the
    keys of referenced sibling declarations and a referenced-by-body flag, so
    that structurally distinguishable declarations sort deterministically in
    both operands of a comparison.  Ties keep their original relative order.
    """
    names = {d.name for d in run}
    body_fv = free_vars(block.body)
    keys = {d.name: (str(d.dtype), _shape(d.init), d.name in body_fv) for d in run}
    by_name = {d.name: d for d in run}
    for _ in range(2):
        keys = {
            d.name: (
                keys[d.name],
                tuple(sorted(str(keys[y]) for y in free_vars(d.init) if y in names)),
            )
            for d in run
        }
    return sorted(run, key=lambda d: (str(keys[d.name]), run.index(d)))


def canonical(e: Expr) -> Expr:
    """Canonical representative modulo alpha-conversion and reordering of
    contiguous evaluated-declaration runs."""
    counter = [0]

    def walk(e: Expr, ren: dict) -> Expr:
        if isinstance(e, Var):
            return Var(ren.get(e.name, e.name))
        if isinstance(e, IntLit):
            return IntLit(e.value)
        if isinstance(e, FieldAccess):
            return FieldAccess(walk(e.recv, ren), e.fname)
        if isinstance(e, FieldAssign):
            return FieldAssign(walk(e.recv, ren), e.fname, walk(e.value, ren))
        if isinstance(e, MethodCall):
            return MethodCall(
                walk(e.recv, ren), e.mname, tuple(walk(a, ren) for a in e.args)
            )
        if isinstance(e, StaticCall):
            return StaticCall(e.cname, e.mname, tuple(walk(a, ren) for a in e.args))
        if isinstance(e, New):
            return New(e.cname, tuple(walk(a, ren) for a in e.args))
        if isinstance(e, Plus):
            return Plus(walk(e.left, ren), walk(e.right, ren))
        if isinstance(e, Block):
            ordered: list = []
            run: list = []
            for d in e.decls:
                if is_evaluated(d):
                    run.append(d)
                else:
                    ordered.extend(_sort_run(run, e))
                    run = []
                    ordered.append(d)
            ordered.extend(_sort_run(run, e))
            ren2 = dict(ren)
            for d in ordered:
                counter[0] += 1
                ren2[d.name] = f"v{counter[0]}"
            return Block(
                tuple(
                    Decl(d.dtype, ren2[d.name], walk(d.init, ren2)) for d in ordered
                ),
                walk(e.body, ren2),
            )
        raise TypeError(f"not an expression: {e!r}")

    return walk(e, {})


def alpha_equiv(e1: Expr, e2: Expr) -> bool:
    return canonical(e1) == canonical(e2)
