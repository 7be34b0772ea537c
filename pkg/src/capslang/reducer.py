"""Small-step reduction over the store-as-blocks representation.

A term in simplified form is decomposed into an evaluation context (a spine of
block frames, the hole always sitting in a declaration's right-hand side) and
a pre-redex: a field access/method call/field assignment on values, an int
operation, or a block whose next declaration is evaluated but not well-formed
store (alias, int literal, capsule, or a block right-value that must be moved
out).  Exactly one rule applies at the unique decomposition; the result is
re-normalized (value congruence) after every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .congruence import (
    NameSupply,
    connected_closure,
    normalize_value,
    wf_store_decl,
)
from .parser import pretty_print
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
    is_value,
    substitute,
)


class ReductionError(Exception):
    pass


class StuckTerm(ReductionError):
    pass


class UnboundReference(ReductionError):
    pass


class OutOfFuel(ReductionError):
    def __init__(self, trace):
        super().__init__("fuel exhausted")
        self.trace = trace


@dataclass(frozen=True)
class Frame:
    """One block frame of an evaluation context: the hole is inside the
    initializer of `block.decls[index]`."""

    block: Block
    index: int

    @property
    def dvs(self) -> tuple:
        return self.block.decls[: self.index]

    @property
    def active(self) -> Decl:
        return self.block.decls[self.index]

    @property
    def rest(self) -> tuple:
        return self.block.decls[self.index + 1 :]


@dataclass(frozen=True)
class NonWfDecl:
    """Pre-redex: a block whose next declaration is evaluated but not
    well-formed store (alias, int literal, capsule, or block right-value)."""

    block: Block
    index: int


@dataclass
class Decomposition:
    frames: list  # outermost first; hole in frames[-1].active.init
    redex: object  # FieldAccess|MethodCall|StaticCall|FieldAssign|Plus|NonWfDecl


def is_simplified(e: Expr, is_rhs: bool = True) -> bool:
    """Every compound subterm is a value, except declaration right-hand
    sides; block bodies are values."""
    if isinstance(e, (Var, IntLit)):
        return True
    if isinstance(e, New):
        return all(is_value(a) and is_simplified(a, False) for a in e.args)
    if isinstance(e, FieldAccess):
        return is_value(e.recv) and is_simplified(e.recv, False)
    if isinstance(e, FieldAssign):
        return all(
            is_value(x) and is_simplified(x, False) for x in (e.recv, e.value)
        )
    if isinstance(e, MethodCall):
        return all(
            is_value(x) and is_simplified(x, False) for x in (e.recv,) + e.args
        )
    if isinstance(e, StaticCall):
        return all(is_value(a) and is_simplified(a, False) for a in e.args)
    if isinstance(e, Plus):
        return all(
            is_value(x) and is_simplified(x, False) for x in (e.left, e.right)
        )
    if isinstance(e, Block):
        return is_value(e.body) and all(
            is_simplified(d.init, True) for d in e.decls
        )
    return False


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------


def decompose(e: Expr) -> Optional[Decomposition]:
    """Unique decomposition into (context frames, pre-redex); None when e is
    fully reduced (a value whose every declaration is well-formed store)."""
    if isinstance(e, Block):
        for i, d in enumerate(e.decls):
            if is_evaluated(d) and wf_store_decl(d):
                continue
            if isinstance(d.init, Block):
                inner = decompose(d.init)
            elif is_value(d.init):
                inner = None
            else:
                inner = _decompose_compound(d.init)
            if inner is not None:
                inner.frames.insert(0, Frame(e, i))
                return inner
            # the initializer is internally normal; the declaration itself
            # is the offender
            return Decomposition([], NonWfDecl(e, i))
        if is_value(e.body):
            return None
        raise StuckTerm(f"block body is not a value: {pretty_print(e.body)}")
    if is_value(e):
        return None
    return _decompose_compound(e)


def _decompose_compound(e: Expr) -> Decomposition:
    if isinstance(e, (FieldAccess, MethodCall, StaticCall, FieldAssign, Plus)):
        return Decomposition([], e)
    raise StuckTerm(f"not in simplified form: {pretty_print(e)}")


def plug(frames: list, e: Expr) -> Expr:
    for fr in reversed(frames):
        d = fr.active
        decls = fr.dvs + (Decl(d.dtype, d.name, e, d.span),) + fr.rest
        e = Block(decls, fr.block.body, fr.block.span)
    return e


# ---------------------------------------------------------------------------
# Auxiliary lookup: declarations, runtime types, field projection
# ---------------------------------------------------------------------------


def dec_lookup(frames: list, x: str) -> Optional[Decl]:
    """The innermost enclosing evaluated declaration of x."""
    for fr in reversed(frames):
        for d in fr.block.decls:
            if d.name == x and is_evaluated(d):
                return d
    return None


def frame_of(frames: list, x: str) -> Optional[int]:
    for i in range(len(frames) - 1, -1, -1):
        for d in frames[i].block.decls:
            if d.name == x and is_evaluated(d):
                return i
    return None


def typeof_rv(rv: Expr, frames: list) -> RefType:
    """Runtime types of right-values: object states and blocks ending in a
    constructor call are mut; a block ending in a reference has the declared
    type of that reference."""
    if isinstance(rv, New):
        return RefType(Qualifier.MUT, rv.cname)
    if isinstance(rv, Block):
        if isinstance(rv.body, New):
            return RefType(Qualifier.MUT, rv.body.cname)
        if isinstance(rv.body, Var):
            for d in rv.decls:
                if d.name == rv.body.name:
                    return d.dtype
            d = dec_lookup(frames, rv.body.name)
            if d is not None:
                return d.dtype
    raise UnboundReference(f"cannot type value {pretty_print(rv)}")


def field_of(rv: Expr, i: int) -> Expr:
    """Project field i out of a right-value; block right-values carry a copy
    of their local store along with the projection."""
    if isinstance(rv, New):
        return rv.args[i]
    if isinstance(rv, Block):
        if isinstance(rv.body, New):
            return Block(rv.decls, rv.body.args[i], rv.span)
        if isinstance(rv.body, Var):
            for d in rv.decls:
                if d.name == rv.body.name:
                    return Block(rv.decls, field_of(d.init, i), rv.span)
    raise UnboundReference(f"no field projection on {pretty_print(rv)}")


def field_lookup(frames: list, v: Expr, i: int) -> Expr:
    if isinstance(v, Var):
        d = dec_lookup(frames, v.name)
        if d is None:
            raise UnboundReference(f"unbound reference {v.name}")
        return field_of(d.init, i)
    return field_of(v, i)


def receiver_class(frames: list, v: Expr) -> str:
    if isinstance(v, Var):
        d = dec_lookup(frames, v.name)
        if d is None:
            raise UnboundReference(f"unbound reference {v.name}")
        t = d.dtype
    else:
        t = typeof_rv(v, frames)
    if not isinstance(t, RefType):
        raise StuckTerm("receiver is not an object")
    return t.cname


# ---------------------------------------------------------------------------
# Renaming (global binder freshness)
# ---------------------------------------------------------------------------


def _rename(e: Expr, ren: dict, namer) -> Expr:
    """Structure-preserving walk applying `ren` to variables; block binders
    get new names chosen by `namer(old_name)`."""
    if isinstance(e, Var):
        return Var(ren.get(e.name, e.name), e.span)
    if isinstance(e, IntLit):
        return e
    if isinstance(e, FieldAccess):
        return FieldAccess(_rename(e.recv, ren, namer), e.fname, e.span)
    if isinstance(e, FieldAssign):
        return FieldAssign(
            _rename(e.recv, ren, namer), e.fname, _rename(e.value, ren, namer), e.span
        )
    if isinstance(e, MethodCall):
        return MethodCall(
            _rename(e.recv, ren, namer),
            e.mname,
            tuple(_rename(a, ren, namer) for a in e.args),
            e.span,
        )
    if isinstance(e, StaticCall):
        return StaticCall(
            e.cname, e.mname, tuple(_rename(a, ren, namer) for a in e.args), e.span
        )
    if isinstance(e, New):
        return New(e.cname, tuple(_rename(a, ren, namer) for a in e.args), e.span)
    if isinstance(e, Plus):
        return Plus(_rename(e.left, ren, namer), _rename(e.right, ren, namer), e.span)
    if isinstance(e, Block):
        ren2 = dict(ren)
        for d in e.decls:
            ren2[d.name] = namer(d.name)
        return Block(
            tuple(
                Decl(d.dtype, ren2[d.name], _rename(d.init, ren2, namer), d.span)
                for d in e.decls
            ),
            _rename(e.body, ren2, namer),
            e.span,
        )
    raise TypeError(f"not an expression: {e!r}")


def freshen(e: Expr, supply: NameSupply, taken: Optional[set] = None) -> Expr:
    """Rename block binders so every binder in the term is globally unique;
    binders whose name is still unused keep it."""
    if taken is None:
        taken = set()

    def namer(name: str) -> str:
        if name in taken:
            name = supply.fresh(name)
        taken.add(name)
        return name

    return _rename(e, {}, namer)


# ---------------------------------------------------------------------------
# The reducer
# ---------------------------------------------------------------------------


@dataclass
class ReductionTrace:
    initial: Optional[Expr] = None
    steps: list = field(default_factory=list)  # of (rule name, term)
    fuel_used: int = 0
    done: bool = False

    @property
    def final(self) -> Expr:
        return self.steps[-1][1] if self.steps else self.initial


class Reducer:
    def __init__(self, table: ClassTable, supply: Optional[NameSupply] = None):
        self.table = table
        self.supply = supply or NameSupply()

    # -- normalization -----------------------------------------------------

    def normalize_term(self, e: Expr, top: bool = True) -> Expr:
        """Apply value congruence to every value position.  The outermost
        block is the program store: its structure (including unreferenced
        declarations) is preserved, only its components are normalized."""
        if isinstance(e, Block) and (top or not is_value(e)):
            decls = tuple(
                Decl(d.dtype, d.name, self.normalize_term(d.init, False), d.span)
                for d in e.decls
            )
            body = self.normalize_term(e.body, False)
            if not decls:
                return body
            return Block(decls, body, e.span)
        if is_value(e):
            return normalize_value(e, self.table, self.supply)
        if isinstance(e, FieldAccess):
            return FieldAccess(self.normalize_term(e.recv, False), e.fname, e.span)
        if isinstance(e, FieldAssign):
            return FieldAssign(
                self.normalize_term(e.recv, False),
                e.fname,
                self.normalize_term(e.value, False),
                e.span,
            )
        if isinstance(e, MethodCall):
            return MethodCall(
                self.normalize_term(e.recv, False),
                e.mname,
                tuple(self.normalize_term(a, False) for a in e.args),
                e.span,
            )
        if isinstance(e, StaticCall):
            return StaticCall(
                e.cname,
                e.mname,
                tuple(self.normalize_term(a, False) for a in e.args),
                e.span,
            )
        if isinstance(e, New):
            return New(
                e.cname, tuple(self.normalize_term(a, False) for a in e.args), e.span
            )
        if isinstance(e, Plus):
            return Plus(
                self.normalize_term(e.left, False),
                self.normalize_term(e.right, False),
                e.span,
            )
        return e

    # -- stepping ------------------------------------------------------------

    def step(self, e: Expr):
        """One reduction step: (rule name, new term), or None when e is
        fully reduced."""
        d = decompose(e)
        if d is None:
            return None
        redex, frames = d.redex, d.frames
        if isinstance(redex, FieldAccess):
            return self._field_access(frames, redex)
        if isinstance(redex, (MethodCall, StaticCall)):
            return self._invoke(frames, redex)
        if isinstance(redex, FieldAssign):
            return self._field_assign(frames, redex)
        if isinstance(redex, Plus):
            return self._plus(frames, redex)
        if isinstance(redex, NonWfDecl):
            return self._non_wf_decl(frames, redex)
        raise StuckTerm(f"no rule applies: {redex!r}")

    def _field_access(self, frames, redex: FieldAccess):
        cname = receiver_class(frames, redex.recv)
        if not self.table.has_field(cname, redex.fname):
            raise StuckTerm(f"no field {redex.fname} in {cname}")
        i = self.table.field_index(cname, redex.fname)
        v = field_lookup(frames, redex.recv, i)
        v = normalize_value(v, self.table, self.supply)
        return ("field-access", plug(frames, v))

    def _invoke(self, frames, redex):
        if isinstance(redex, StaticCall):
            cname = redex.cname
        else:
            cname = receiver_class(frames, redex.recv)
        if not self.table.has_method(cname, redex.mname):
            raise StuckTerm(f"no method {redex.mname} in {cname}")
        sig = self.table.method(cname, redex.mname)
        if len(sig.params) != len(redex.args):
            raise StuckTerm(f"arity mismatch calling {cname}.{sig.name}")
        # the call unfolds to a block binding the receiver (at the declared
        # receiver qualifier), the parameters, and the renamed body
        ren = {}
        decls = []
        if isinstance(redex, MethodCall):
            ren["this"] = self.supply.fresh("this")
            decls.append(
                Decl(RefType(sig.this_qual, cname), ren["this"], redex.recv)
            )
        for (pt, pn), a in zip(sig.params, redex.args):
            ren[pn] = self.supply.fresh(pn)
            decls.append(Decl(pt, ren[pn], a))
        body = _rename(sig.body, ren, lambda n: self.supply.fresh(n))
        z = self.supply.fresh("z")
        decls.append(Decl(sig.ret, z, body))
        return ("invk", plug(frames, Block(tuple(decls), Var(z))))

    def _plus(self, frames, redex: Plus):
        if isinstance(redex.left, IntLit) and isinstance(redex.right, IntLit):
            return (
                "plus",
                plug(frames, IntLit(redex.left.value + redex.right.value)),
            )
        raise StuckTerm("non-literal int operands")

    # -- field assignment ----------------------------------------------------

    def _field_assign(self, frames, redex: FieldAssign):
        if not isinstance(redex.recv, Var):
            # receiver is not a reference: name it, then assign through it
            t = typeof_rv(redex.recv, frames)
            x = self.supply.fresh("r")
            ft = self.table.field_type(t.cname, redex.fname)
            z = self.supply.fresh("z")
            block = Block(
                (
                    Decl(t, x, redex.recv),
                    Decl(ft, z, FieldAssign(Var(x), redex.fname, redex.value)),
                ),
                Var(z),
            )
            return ("field-assign-prop", plug(frames, block))
        x = redex.recv.name
        u = redex.value
        j = frame_of(frames, x)
        if j is None:
            raise UnboundReference(f"unbound reference {x}")
        xd = dec_lookup(frames, x)
        # scope extrusion: u must not capture declarations from frames deeper
        # than the one declaring x; move the offending store out first,
        # innermost frame first, one move per step
        for k in range(len(frames) - 1, j, -1):
            xs = free_vars(u) & frozenset(d.name for d in frames[k].dvs)
            if xs:
                return self._field_assign_move(frames, k, xs, redex)
        if not isinstance(xd.dtype, RefType):
            raise StuckTerm(f"assignment through non-object reference {x}")
        cname = xd.dtype.cname
        if not self.table.has_field(cname, redex.fname):
            raise StuckTerm(f"no field {redex.fname} in {cname}")
        i = self.table.field_index(cname, redex.fname)
        if not is_objstate(xd.init):
            raise StuckTerm(f"right-value of {x} is not an object state")
        args = list(xd.init.args)
        args[i] = u
        new_rv = New(xd.init.cname, tuple(args), xd.init.span)
        fr = frames[j]
        decls = tuple(
            Decl(d.dtype, d.name, new_rv, d.span) if d.name == x else d
            for d in fr.block.decls
        )
        frames2 = list(frames)
        frames2[j] = Frame(Block(decls, fr.block.body, fr.block.span), fr.index)
        return ("field-assign", plug(frames2, u))

    def _field_assign_move(self, frames, k: int, xs: frozenset, redex):
        """Hoist the store connected to xs from frame k into frame k-1; fails
        when k is outermost (genuine scope extrusion)."""
        if k == 0:
            raise StuckTerm("cannot move store out of the outermost block")
        fr = frames[k]
        moved = connected_closure(fr.block.decls, xs)
        if any(d not in fr.dvs for d in moved):
            raise StuckTerm("store to move is not fully evaluated")
        keep = tuple(d for d in fr.block.decls if d not in moved)
        moved = tuple(_as_stored(d) for d in moved)
        inner_frame = Frame(
            Block(keep, fr.block.body, fr.block.span), fr.index - len(moved)
        )
        outer = frames[k - 1]
        outer_decls = outer.dvs + moved + (outer.active,) + outer.rest
        outer_frame = Frame(
            Block(outer_decls, outer.block.body, outer.block.span),
            outer.index + len(moved),
        )
        frames2 = frames[: k - 1] + [outer_frame, inner_frame] + frames[k + 1 :]
        return ("field-assign-move", plug(frames2, redex))

    # -- store-shape rules on evaluated declarations --------------------------

    def _non_wf_decl(self, frames, redex: NonWfDecl):
        block, i = redex.block, redex.index
        d = block.decls[i]
        if isinstance(d.dtype, IntType) and isinstance(d.init, IntLit):
            return ("int-elim", plug(frames, self._subst_out(block, i, d.init)))
        if isinstance(d.init, Var):
            return ("alias-elim", plug(frames, self._subst_out(block, i, d.init)))
        if (
            isinstance(d.dtype, RefType)
            and d.dtype.qualifier is Qualifier.CAPSULE
        ):
            return (
                "capsule-elim",
                plug(frames, self._subst_out(block, i, d.init)),
            )
        if isinstance(d.init, Block):
            q = d.dtype.qualifier
            if q in (Qualifier.MUT, Qualifier.LENT, Qualifier.READ):
                moved = tuple(_as_stored(dd) for dd in d.init.decls)
                kept, rule = (), "mut-move"
            else:  # imm: only the imm part of the local store may escape
                moved = tuple(dd for dd in d.init.decls if _is_imm_decl(dd))
                kept = tuple(dd for dd in d.init.decls if not _is_imm_decl(dd))
                rule = "imm-move"
                if not moved:
                    raise StuckTerm(
                        f"imm declaration {d.name} has a non-flattenable store"
                    )
                moved_fv = frozenset().union(
                    *(free_vars(m.init) for m in moved)
                )
                if moved_fv & frozenset(kk.name for kk in kept):
                    raise StuckTerm(
                        f"imm store of {d.name} depends on its mutable locals"
                    )
            init = (
                d.init.body if not kept else Block(kept, d.init.body, d.init.span)
            )
            decls = (
                block.decls[:i]
                + moved
                + (Decl(d.dtype, d.name, init, d.span),)
                + block.decls[i + 1 :]
            )
            return (rule, plug(frames, Block(decls, block.body, block.span)))
        raise StuckTerm(f"declaration {d.name} is evaluated but no rule applies")

    def _subst_out(self, block: Block, index: int, v: Expr) -> Expr:
        d = block.decls[index]
        decls = block.decls[:index] + block.decls[index + 1 :]
        out: Expr = Block(decls, block.body, block.span) if decls else block.body
        return substitute(out, v, d.name)

    # -- driver ----------------------------------------------------------------

    def run(self, e: Expr, fuel: int = 10_000) -> ReductionTrace:
        trace = ReductionTrace()
        term = self.normalize_term(freshen(e, self.supply))
        trace.initial = term
        while True:
            r = self.step(term)
            if r is None:
                trace.done = True
                return trace
            if trace.fuel_used >= fuel:
                raise OutOfFuel(trace)
            rule, term = r
            term = self.normalize_term(term)
            trace.fuel_used += 1
            trace.steps.append((rule, term))


def _is_imm_decl(d: Decl) -> bool:
    return isinstance(d.dtype, RefType) and d.dtype.qualifier is Qualifier.IMM


def _as_stored(d: Decl) -> Decl:
    """A declaration hoisted into an enclosing store: a lent local becomes a
    plain mut member of the store it now belongs to."""
    if isinstance(d.dtype, RefType) and d.dtype.qualifier is Qualifier.LENT:
        return Decl(RefType(Qualifier.MUT, d.dtype.cname), d.name, d.init, d.span)
    return d


