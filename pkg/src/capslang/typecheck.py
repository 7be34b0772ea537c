"""Algorithmic typechecker.

The qualifier system is declarative: besides the syntax-directed rules there
are five rules (subsumption, capsule promotion, immutability promotion, group
swap, unrestriction) that can apply anywhere.  This module realizes it as a
goal-directed backtracking search:

* structural rules are applied first, directed by the syntax of the term;
* subsumption only at comparison points (initializer vs declared type,
  argument vs parameter, assignment RHS vs field type, body vs return type);
* capsule promotion is attempted when the goal qualifier is capsule (or imm,
  since capsule <= imm), immutability promotion when the goal is imm;
* a group swap is attempted at the smallest enclosing subterm whose check
  failed structurally, for each lent group disjoint from the restricted set;
* unrestriction is attempted when the goal is capsule/imm/int.

Results are memoized per top-level judgment, keyed by subterm identity, a
canonical context fingerprint and the goal; a configurable budget bounds the
search (exhausting it raises SearchExhausted, which is distinct from a typing
failure).
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from typing import Optional

from .syntax import (
    INT,
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
    Program,
    Qualifier,
    RefType,
    StaticCall,
    Type,
    Var,
    free_vars,
    is_evaluated,
    qual_leq,
    subtype,
)
from .congruence import connected_closure

DEFAULT_BUDGET = 100_000
MAX_LENT_LOCALS = 6


class TypeCheckError(Exception):
    kind = "IllTyped"

    def __init__(self, message: str, span=None):
        super().__init__(message)
        self.span = span


class IllTyped(TypeCheckError):
    kind = "IllTyped"


class SearchExhausted(TypeCheckError):
    kind = "SearchExhausted"


class MalformedContext(TypeCheckError):
    kind = "MalformedContext"


@dataclass(frozen=True)
class TypeContext:
    """Gamma plus the lent groups (xss) and restricted variables (ys).

    Lent-ness of a variable is encoded by membership in a lent group while its
    gamma entry stays mut; the mutable group is derived (mut variables not in
    any lent group).
    """

    gamma: tuple  # sorted tuple of (name, Type)
    groups: tuple = ()  # of frozenset
    restricted: frozenset = frozenset()

    @staticmethod
    def make(gamma: dict, groups=(), restricted=frozenset()) -> "TypeContext":
        return TypeContext(
            tuple(sorted(gamma.items())),
            tuple(g for g in groups if g),
            frozenset(restricted),
        )

    def lookup(self, x: str) -> Optional[Type]:
        for (n, t) in self.gamma:
            if n == x:
                return t
        return None

    def gamma_dict(self) -> dict:
        return dict(self.gamma)

    def mutable_group(self) -> frozenset:
        grouped = frozenset().union(*self.groups) if self.groups else frozenset()
        return frozenset(
            n
            for (n, t) in self.gamma
            if isinstance(t, RefType) and t.qualifier is Qualifier.MUT and n not in grouped
        )

    def group_of(self, x: str) -> Optional[frozenset]:
        for g in self.groups:
            if x in g:
                return g
        return None

    def fingerprint(self) -> tuple:
        return (
            self.gamma,
            tuple(sorted((tuple(sorted(g)) for g in self.groups))),
            tuple(sorted(self.restricted)),
        )


def wf_context(ctx: TypeContext) -> bool:
    """The four context well-formedness conditions."""
    gamma = ctx.gamma_dict()
    seen = set()
    for g in ctx.groups:
        if seen & g:
            return False  # groups must be disjoint
        seen |= g
        for x in g:
            t = gamma.get(x)
            if not (isinstance(t, RefType) and t.qualifier is Qualifier.MUT):
                return False  # group members are mut in gamma
    for (_, t) in ctx.gamma:
        if isinstance(t, RefType) and t.qualifier is Qualifier.LENT:
            return False  # no variable is lent in gamma
    for y in ctx.restricted:
        t = gamma.get(y)
        if not isinstance(t, RefType):
            return False
        if t.qualifier not in (Qualifier.MUT, Qualifier.READ):
            return False  # restricted variables are mut or read
        if t.qualifier is Qualifier.MUT and ctx.group_of(y) is None:
            return False  # restricted mut variables belong to a lent group
    return True


@dataclass(frozen=True)
class Judgment:
    context: TypeContext
    expr: Expr
    result: Type
    rule: str
    premises: tuple = ()
    note: tuple = field(default=(), compare=False)  # rule-specific extras

    def rule_path(self) -> list:
        out = [self.rule]
        for p in self.premises:
            out.extend(p.rule_path())
        return out


def _stored_type(t: Type) -> Type:
    """Declared types as recorded in gamma: lent locals are stored mut."""
    if isinstance(t, RefType) and t.qualifier is Qualifier.LENT:
        return RefType(Qualifier.MUT, t.cname)
    return t


def _weaken(t: Type) -> Type:
    """mut is weakened to lent (result adjustment of the swap and var rules)."""
    if isinstance(t, RefType) and t.qualifier is Qualifier.MUT:
        return RefType(Qualifier.LENT, t.cname)
    return t


def _swap_groups(ctx: TypeContext, g: frozenset) -> TypeContext:
    """Exchange lent group g with the mutable group."""
    mg = ctx.mutable_group()
    groups = tuple(h for h in ctx.groups if h != g)
    if mg:
        groups = groups + (mg,)
    return TypeContext(ctx.gamma, groups, ctx.restricted)


class _InProgress:
    pass


_IN_PROGRESS = _InProgress()


class Checker:
    def __init__(self, table: ClassTable, budget: Optional[int] = None):
        self.table = table
        if budget is None:
            budget = int(os.environ.get("CAPS_SEARCH_BUDGET", DEFAULT_BUDGET))
        self.budget = budget
        self.memo: dict = {}
        self.ticks = 0

    # ------------------------------------------------------------------
    # public entry points
    # ------------------------------------------------------------------

    def check(self, ctx: TypeContext, e: Expr, goal: Optional[Type]) -> Judgment:
        """Derive a judgment for e whose result is <= goal (or the structural
        minimum when goal is None)."""
        self._tick()
        key = (id(e), ctx.fingerprint(), goal)
        hit = self.memo.get(key)
        if hit is _IN_PROGRESS:
            raise IllTyped("cyclic search", _span(e))
        if hit is not None:
            if isinstance(hit, Judgment):
                return hit
            raise hit
        self.memo[key] = _IN_PROGRESS
        try:
            j = self._check(ctx, e, goal)
        except IllTyped as err:
            self.memo[key] = err
            raise
        except SearchExhausted:
            del self.memo[key]
            raise
        self.memo[key] = j
        return j

    def infer(self, ctx: TypeContext, e: Expr) -> Judgment:
        return self.check(ctx, e, None)

    # ------------------------------------------------------------------
    # goal-directed search
    # ------------------------------------------------------------------

    def _check(self, ctx: TypeContext, e: Expr, goal: Optional[Type]) -> Judgment:
        first_err: Optional[IllTyped] = None
        try:
            j = self._structural(ctx, e, goal)
            if goal is None or subtype(j.result, goal):
                return self._sub(j, goal)
        except IllTyped as err:
            first_err = err
        if goal is None:
            raise first_err or IllTyped(
                f"has type that does not fit here", _span(e)
            )
        if isinstance(goal, RefType):
            # capsule promotion: applicable when the goal admits capsule
            if goal.qualifier in (Qualifier.CAPSULE, Qualifier.IMM):
                try:
                    return self._sub(self._try_capsule(ctx, e, goal.cname), goal)
                except IllTyped as err:
                    first_err = first_err or err
            if goal.qualifier is Qualifier.IMM:
                try:
                    return self._try_imm(ctx, e, goal.cname)
                except IllTyped as err:
                    first_err = first_err or err
        # group swap
        for g in ctx.groups:
            if g & ctx.restricted:
                continue
            for inner_goal in self._swap_goals(goal):
                try:
                    j = self.check(_swap_groups(ctx, g), e, inner_goal)
                except IllTyped:
                    continue
                weakened = _weaken(j.result)
                if subtype(weakened, goal):
                    return Judgment(
                        ctx, e, weakened, "t-swap", (j,), note=("swap", tuple(sorted(g)))
                    )
        # unrestriction
        if ctx.restricted and (
            isinstance(goal, IntType)
            or goal.qualifier in (Qualifier.CAPSULE, Qualifier.IMM)
        ):
            ctx2 = TypeContext(ctx.gamma, ctx.groups, frozenset())
            try:
                j = self.check(ctx2, e, goal)
                if isinstance(j.result, IntType) or qual_leq(
                    j.result.qualifier, Qualifier.IMM
                ):
                    return Judgment(ctx, e, j.result, "t-unrst", (j,))
            except IllTyped as err:
                first_err = first_err or err
        raise first_err or IllTyped(
            f"no derivation for goal {goal}", _span(e)
        )

    def _swap_goals(self, goal: Type):
        yield goal
        if isinstance(goal, RefType) and goal.qualifier in (
            Qualifier.LENT,
            Qualifier.READ,
        ):
            yield RefType(Qualifier.MUT, goal.cname)

    def _sub(self, j: Judgment, goal: Optional[Type]) -> Judgment:
        if goal is None or j.result == goal:
            return j
        return Judgment(j.context, j.expr, goal, "t-sub", (j,))

    def _try_capsule(self, ctx: TypeContext, e: Expr, cname: str) -> Judgment:
        mg = ctx.mutable_group()
        groups = ctx.groups + ((mg,) if mg else ())
        ctx2 = TypeContext(ctx.gamma, groups, ctx.restricted)
        j = self.check(ctx2, e, RefType(Qualifier.MUT, cname))
        return Judgment(
            ctx, e, RefType(Qualifier.CAPSULE, cname), "t-capsule", (j,),
            note=("grouped", tuple(sorted(mg))),
        )

    def _try_imm(self, ctx: TypeContext, e: Expr, cname: str) -> Judgment:
        mg = ctx.mutable_group()
        groups = ctx.groups + ((mg,) if mg else ())
        restricted = frozenset(
            n
            for (n, t) in ctx.gamma
            if isinstance(t, RefType)
            and t.qualifier in (Qualifier.MUT, Qualifier.READ)
        )
        ctx2 = TypeContext(ctx.gamma, groups, restricted)
        j = self.check(ctx2, e, RefType(Qualifier.READ, cname))
        return Judgment(
            ctx, e, RefType(Qualifier.IMM, cname), "t-imm", (j,),
            note=("restricted", tuple(sorted(restricted))),
        )

    # ------------------------------------------------------------------
    # structural rules
    # ------------------------------------------------------------------

    def _structural(self, ctx: TypeContext, e: Expr, goal: Optional[Type]) -> Judgment:
        if isinstance(e, Var):
            return self._var(ctx, e)
        if isinstance(e, IntLit):
            return Judgment(ctx, e, INT, "t-int")
        if isinstance(e, Plus):
            jl = self.check(ctx, e.left, INT)
            jr = self.check(ctx, e.right, INT)
            return Judgment(ctx, e, INT, "t-plus", (jl, jr))
        if isinstance(e, New):
            return self._new(ctx, e)
        if isinstance(e, FieldAccess):
            return self._field_access(ctx, e)
        if isinstance(e, FieldAssign):
            return self._field_assign(ctx, e)
        if isinstance(e, MethodCall):
            return self._meth_call(ctx, e)
        if isinstance(e, StaticCall):
            return self._static_call(ctx, e)
        if isinstance(e, Block):
            return self.check_block(ctx, e, goal)
        raise TypeError(f"not an expression: {e!r}")

    def _var(self, ctx: TypeContext, e: Var) -> Judgment:
        t = ctx.lookup(e.name)
        if t is None:
            raise IllTyped(f"unknown variable {e.name}", _span(e))
        if e.name in ctx.restricted:
            raise IllTyped(f"variable {e.name} is restricted here", _span(e))
        if (
            isinstance(t, RefType)
            and t.qualifier is Qualifier.MUT
            and ctx.group_of(e.name) is not None
        ):
            t = RefType(Qualifier.LENT, t.cname)
        return Judgment(ctx, e, t, "t-var")

    def _new(self, ctx: TypeContext, e: New) -> Judgment:
        if e.cname not in self.table:
            raise IllTyped(f"unknown class {e.cname}", _span(e))
        fields = self.table.fields(e.cname)
        if len(fields) != len(e.args):
            raise IllTyped(
                f"new {e.cname}: expected {len(fields)} arguments, got {len(e.args)}",
                _span(e),
            )
        premises = tuple(
            self.check(ctx, a, ft) for a, (ft, _) in zip(e.args, fields)
        )
        return Judgment(ctx, e, RefType(Qualifier.MUT, e.cname), "t-new", premises)

    def _field_access(self, ctx: TypeContext, e: FieldAccess) -> Judgment:
        jr = self.infer(ctx, e.recv)
        if not isinstance(jr.result, RefType):
            raise IllTyped("field access on a non-object", _span(e))
        cname = jr.result.cname
        try:
            ft = self.table.field_type(cname, e.fname)
        except KeyError:
            raise IllTyped(f"no field {e.fname} in class {cname}", _span(e))
        if isinstance(ft, RefType) and ft.qualifier is Qualifier.MUT:
            result: Type = RefType(jr.result.qualifier, ft.cname)
        else:
            result = ft  # imm and int fields keep their declared type
        return Judgment(ctx, e, result, "t-field-access", (jr,))

    def _field_assign(self, ctx: TypeContext, e: FieldAssign) -> Judgment:
        cname = self._receiver_class(ctx, e.recv)
        jr = self.check(ctx, e.recv, RefType(Qualifier.MUT, cname))
        try:
            ft = self.table.field_type(cname, e.fname)
        except KeyError:
            raise IllTyped(f"no field {e.fname} in class {cname}", _span(e))
        jv = self.check(ctx, e.value, ft)
        return Judgment(ctx, e, ft, "t-field-assign", (jr, jv))

    def _meth_call(self, ctx: TypeContext, e: MethodCall) -> Judgment:
        cname = self._receiver_class(ctx, e.recv)
        if not self.table.has_method(cname, e.mname):
            raise IllTyped(f"no method {e.mname} in class {cname}", _span(e))
        sig = self.table.method(cname, e.mname)
        if sig.this_qual is None:
            raise IllTyped(
                f"method {cname}.{e.mname} is static; call it as {cname}.{e.mname}(...)",
                _span(e),
            )
        if len(sig.params) != len(e.args):
            raise IllTyped(
                f"{cname}.{e.mname}: expected {len(sig.params)} arguments, got {len(e.args)}",
                _span(e),
            )
        jr = self.check(ctx, e.recv, RefType(sig.this_qual, cname))
        premises = (jr,) + tuple(
            self.check(ctx, a, pt) for a, (pt, _) in zip(e.args, sig.params)
        )
        return Judgment(ctx, e, sig.ret, "t-meth-call", premises)

    def _static_call(self, ctx: TypeContext, e: StaticCall) -> Judgment:
        if not self.table.has_method(e.cname, e.mname):
            raise IllTyped(f"no method {e.mname} in class {e.cname}", _span(e))
        sig = self.table.method(e.cname, e.mname)
        if sig.this_qual is not None:
            raise IllTyped(f"method {e.cname}.{e.mname} is not static", _span(e))
        if len(sig.params) != len(e.args):
            raise IllTyped(
                f"{e.cname}.{e.mname}: expected {len(sig.params)} arguments, got {len(e.args)}",
                _span(e),
            )
        premises = tuple(
            self.check(ctx, a, pt) for a, (pt, _) in zip(e.args, sig.params)
        )
        return Judgment(ctx, e, sig.ret, "t-static-call", premises)

    def _receiver_class(self, ctx: TypeContext, recv: Expr) -> str:
        t = shape_type(self.table, _shape_gamma(ctx), recv)
        if not isinstance(t, RefType):
            raise IllTyped("receiver is not an object", _span(recv))
        if t.cname not in self.table:
            raise IllTyped(f"unknown class {t.cname}", _span(recv))
        return t.cname

    # ------------------------------------------------------------------
    # blocks
    # ------------------------------------------------------------------

    def check_block(
        self, ctx: TypeContext, block: Block, goal: Optional[Type]
    ) -> Judgment:
        decls = block.decls
        if not decls:
            j = self.check(ctx, block.body, goal)
            return Judgment(ctx, block, j.result, "t-block", (j,))
        dom = frozenset(d.name for d in decls)
        gamma = ctx.gamma_dict()
        for d in decls:
            if d.dtype is None:
                raise IllTyped(
                    f"declaration {d.name} lacks a type (unresolved sugar)", d.span
                )
            gamma[d.name] = _stored_type(d.dtype)
        gamma_items = tuple(sorted(gamma.items()))
        base_groups = tuple(g - dom for g in ctx.groups if g - dom)
        restricted = ctx.restricted - dom
        lent_locals = [
            d.name
            for d in decls
            if isinstance(d.dtype, RefType) and d.dtype.qualifier is Qualifier.LENT
        ]
        mut_locals = [
            d.name
            for d in decls
            if isinstance(d.dtype, RefType) and d.dtype.qualifier is Qualifier.MUT
        ]
        if len(lent_locals) > MAX_LENT_LOCALS:
            raise SearchExhausted(
                f"block has {len(lent_locals)} lent locals (cap {MAX_LENT_LOCALS})",
                block.span,
            )
        first_err: Optional[IllTyped] = None
        for groups in self._group_candidates(
            block, lent_locals, base_groups, mut_locals
        ):
            ctx_body = TypeContext(gamma_items, groups, restricted)
            if not wf_context(ctx_body):
                continue
            try:
                premises = []
                for d in decls:
                    goal_d = gamma[d.name]
                    own = ctx_body.group_of(d.name)
                    # the initializer of a grouped local is typed with its
                    # own group made mutable
                    ctx_d = _swap_groups(ctx_body, own) if own else ctx_body
                    j_own = self._try_consume(block, d, gamma, ctx_d)
                    if j_own is not None:
                        premises.append(j_own)
                        continue
                    premises.append(self.check(ctx_d, d.init, goal_d))
                jb = self.check(ctx_body, block.body, goal)
                return Judgment(
                    ctx,
                    block,
                    jb.result,
                    "t-block",
                    tuple(premises) + (jb,),
                    note=("groups", tuple(tuple(sorted(g)) for g in groups)),
                )
            except IllTyped as err:
                first_err = first_err or err
                continue
        raise first_err or IllTyped("no lent-group assignment typechecks", block.span)

    def _try_consume(self, block: Block, d: Decl, gamma: dict, ctx: TypeContext):
        """A capsule (or imm) declaration may consume a sibling local together
        with the part of the local store only it refers to.  This is the
        transient shape left behind when a call returning capsule unfolds:
        the alias is about to be eliminated, and the consumed store is
        unreachable from anywhere else in the block."""
        if not (
            isinstance(d.dtype, RefType)
            and d.dtype.qualifier in (Qualifier.CAPSULE, Qualifier.IMM)
            and isinstance(d.init, Var)
        ):
            return None
        y = d.init.name
        siblings = {dd.name: dd for dd in block.decls}
        if y not in siblings or y == d.name:
            return None
        t_y = gamma.get(y)
        if not (
            isinstance(t_y, RefType)
            and t_y.qualifier is Qualifier.MUT
            and t_y.cname == d.dtype.cname
        ):
            return None
        owned = connected_closure(block.decls, frozenset({y}))
        owned_names = {dd.name for dd in owned}
        if d.name in owned_names:
            return None
        # nothing live may reach the consumed store: siblings that refer to
        # it but are themselves unreachable from the body are dead and
        # irrelevant
        live = connected_closure(
            tuple(dd for dd in block.decls if dd.name != d.name),
            free_vars(block.body) - frozenset({d.name}),
        )
        if owned_names & {dd.name for dd in live}:
            return None
        # no still-unevaluated sibling may touch it either: its pending
        # effects would run against the consumed store
        for dd in block.decls:
            if dd.name in owned_names or dd.name == d.name:
                continue
            if not is_evaluated(dd) and free_vars(dd.init) & owned_names:
                return None
        # the consumed store may only refer outwards to immutable data
        ext = frozenset().union(
            *(free_vars(dd.init) for dd in owned)
        ) - frozenset(owned_names)
        for x in ext:
            t = gamma.get(x) or ctx.lookup(x)
            if isinstance(t, IntType):
                continue
            if isinstance(t, RefType) and t.qualifier in (
                Qualifier.IMM,
                Qualifier.CAPSULE,
            ):
                continue
            return None
        rule = "t-capsule" if d.dtype.qualifier is Qualifier.CAPSULE else "t-imm"
        premise = Judgment(ctx, d.init, t_y, "t-var")
        return Judgment(
            ctx,
            d.init,
            d.dtype,
            rule,
            (premise,),
            note=("consumes", tuple(sorted(owned_names))),
        )

    def _group_candidates(self, block: Block, lent_locals, base_groups, mut_locals=()):
        """Group assignments for the block's locals.

        A seeded candidate (must-share constraints from field assignments,
        singletons otherwise) is tried first, then all canonical assignments
        of lent locals to existing groups or new groups among themselves.
        As a last resort mut locals may join groups too: that is a pure
        weakening (a grouped variable is usable as lent) which some store
        shapes produced by reduction need.
        """
        if not lent_locals and not mut_locals:
            yield base_groups
            return
        emitted = set()

        def norm(groups):
            return tuple(sorted(tuple(sorted(g)) for g in groups))

        def enumerate_over(locals_, optional):
            """All assignments of locals_ to base groups or fresh slots;
            names in `optional` may also stay ungrouped."""
            k = len(base_groups)
            n = len(locals_)
            ranges = [
                range(-1, k + n) if x in optional else range(k + n)
                for x in locals_
            ]
            for choice in itertools.product(*ranges):
                groups = [set(g) for g in base_groups]
                slots: dict = {}
                for x, c in zip(locals_, choice):
                    if c < 0:
                        continue  # stays in the mutable group
                    if c < k:
                        groups[c].add(x)
                    else:
                        slots.setdefault(c, set()).add(x)
                out = tuple(frozenset(g) for g in groups) + tuple(
                    frozenset(s) for s in slots.values()
                )
                key = norm(out)
                if key in emitted:
                    continue
                emitted.add(key)
                yield out

        if lent_locals:
            seeded = self._seed_assignment(block, lent_locals, base_groups)
            if seeded is not None:
                emitted.add(norm(seeded))
                yield seeded
            yield from enumerate_over(list(lent_locals), frozenset())
        else:
            yield base_groups
            emitted.add(norm(base_groups))
        # fallback: a mut local whose initializer refers into an existing
        # group may join one of those groups (pure weakening; some store
        # shapes produced by reduction need it)
        inits = {d.name: d.init for d in block.decls}
        eligible = []  # (name, tuple of touched base-group indices)
        for x in mut_locals:
            touched = tuple(
                i
                for i, g in enumerate(base_groups)
                if free_vars(inits[x]) & g
            )
            if touched:
                eligible.append((x, touched))
        if eligible and len(eligible) <= MAX_LENT_LOCALS:
            for choice in itertools.product(
                *[(None,) + touched for _, touched in eligible]
            ):
                if all(c is None for c in choice):
                    continue
                extra: dict = {}
                for (x, _), c in zip(eligible, choice):
                    if c is not None:
                        extra.setdefault(c, set()).add(x)
                for lent_groups in (
                    self._group_candidates(block, lent_locals, base_groups)
                    if lent_locals
                    else (base_groups,)
                ):
                    out = tuple(
                        g | extra.get(i, set()) if i < len(base_groups) else g
                        for i, g in enumerate(lent_groups)
                    )
                    key = norm(out)
                    if key in emitted:
                        continue
                    emitted.add(key)
                    yield out

    def _seed_assignment(self, block: Block, lent_locals, base_groups):
        """Must-share pre-pass: variables appearing together as receiver and
        RHS of a field assignment must end up in the same group (both need to
        be mut under the same swap).  Remaining lent locals get singleton
        groups."""
        from .syntax import children

        parent = {x: x for x in lent_locals}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        pairs = []

        def scan(e: Expr):
            if isinstance(e, FieldAssign) and isinstance(e.recv, Var) and isinstance(
                e.value, Var
            ):
                pairs.append((e.recv.name, e.value.name))
            for c in children(e):
                scan(c)

        scan(block)
        join: dict = {}  # union-find root -> base group index
        for (a, b) in pairs:
            if a in parent and b in parent:
                parent[find(a)] = find(b)
        for (a, b) in pairs:
            for local, other in ((a, b), (b, a)):
                if local in parent:
                    for i, g in enumerate(base_groups):
                        if other in g:
                            join[find(local)] = i
        groups = [set(g) for g in base_groups]
        slots: dict = {}
        for x in lent_locals:
            root = find(x)
            if root in join:
                groups[join[root]].add(x)
            else:
                slots.setdefault(root, set()).add(x)
        return tuple(frozenset(g) for g in groups if g) + tuple(
            frozenset(s) for s in slots.values()
        )

    def _tick(self):
        self.ticks += 1
        if self.ticks > self.budget:
            raise SearchExhausted(f"search budget of {self.budget} nodes exhausted")


def _span(e: Expr):
    return getattr(e, "span", None)


# ---------------------------------------------------------------------------
# Shape inference: class/type skeleton of an expression, ignoring groups and
# restrictions.  Used to find receiver classes, to fill in the declared types
# of statement-sugar discards, and by the simplified-form translation.
# ---------------------------------------------------------------------------


def _shape_gamma(ctx: TypeContext) -> dict:
    return ctx.gamma_dict()


def shape_type(table: ClassTable, gamma: dict, e: Expr) -> Type:
    if isinstance(e, Var):
        t = gamma.get(e.name)
        if t is None:
            raise IllTyped(f"unknown variable {e.name}", _span(e))
        return t
    if isinstance(e, IntLit) or isinstance(e, Plus):
        return INT
    if isinstance(e, New):
        return RefType(Qualifier.MUT, e.cname)
    if isinstance(e, FieldAccess):
        rt = shape_type(table, gamma, e.recv)
        if not isinstance(rt, RefType) or rt.cname not in table:
            raise IllTyped("field access on a non-object", _span(e))
        try:
            ft = table.field_type(rt.cname, e.fname)
        except KeyError:
            raise IllTyped(f"no field {e.fname} in class {rt.cname}", _span(e))
        if isinstance(ft, RefType) and ft.qualifier is Qualifier.MUT:
            q = rt.qualifier
            if q is Qualifier.CAPSULE:
                q = Qualifier.MUT
            return RefType(q, ft.cname)
        return ft
    if isinstance(e, FieldAssign):
        rt = shape_type(table, gamma, e.recv)
        if not isinstance(rt, RefType) or rt.cname not in table:
            raise IllTyped("assignment on a non-object", _span(e))
        try:
            return table.field_type(rt.cname, e.fname)
        except KeyError:
            raise IllTyped(f"no field {e.fname} in class {rt.cname}", _span(e))
    if isinstance(e, MethodCall):
        rt = shape_type(table, gamma, e.recv)
        if not isinstance(rt, RefType) or not table.has_method(rt.cname, e.mname):
            raise IllTyped(f"no method {e.mname} here", _span(e))
        return table.method(rt.cname, e.mname).ret
    if isinstance(e, StaticCall):
        if not table.has_method(e.cname, e.mname):
            raise IllTyped(f"no method {e.mname} in class {e.cname}", _span(e))
        return table.method(e.cname, e.mname).ret
    if isinstance(e, Block):
        g2 = dict(gamma)
        pending = list(e.decls)
        # declared types first (forward references), then infer the sugared ones
        for d in pending:
            if d.dtype is not None:
                g2[d.name] = _stored_type(d.dtype)
        for d in pending:
            if d.dtype is None:
                g2[d.name] = discard_type(shape_type(table, g2, d.init))
        return shape_type(table, g2, e.body)
    raise TypeError(f"not an expression: {e!r}")


def discard_type(t: Type) -> Type:
    """Declared type for a statement-sugar discard variable.

    A lent shape is recorded read: a read local accepts the initializer by
    subsumption without joining any lent group.
    """
    if isinstance(t, RefType) and t.qualifier is Qualifier.LENT:
        return RefType(Qualifier.READ, t.cname)
    return t


def resolve_implicit_types(p: Program) -> Program:
    """Fill in the declared types of statement-sugar discard declarations."""
    from .syntax import ClassDef, MethodSig

    def walk(e: Expr, gamma: dict) -> Expr:
        if isinstance(e, Block):
            g2 = dict(gamma)
            for d in e.decls:
                if d.dtype is not None:
                    g2[d.name] = _stored_type(d.dtype)
            new_decls = []
            for d in e.decls:
                init = walk(d.init, g2)
                dtype = d.dtype
                if dtype is None:
                    dtype = discard_type(shape_type(p.table, g2, init))
                    g2[d.name] = _stored_type(dtype)
                new_decls.append(Decl(dtype, d.name, init, d.span))
            return Block(tuple(new_decls), walk(e.body, g2), e.span)
        if isinstance(e, (Var, IntLit)):
            return e
        if isinstance(e, FieldAccess):
            return FieldAccess(walk(e.recv, gamma), e.fname, e.span)
        if isinstance(e, FieldAssign):
            return FieldAssign(walk(e.recv, gamma), e.fname, walk(e.value, gamma), e.span)
        if isinstance(e, MethodCall):
            return MethodCall(
                walk(e.recv, gamma), e.mname, tuple(walk(a, gamma) for a in e.args), e.span
            )
        if isinstance(e, StaticCall):
            return StaticCall(
                e.cname, e.mname, tuple(walk(a, gamma) for a in e.args), e.span
            )
        if isinstance(e, New):
            return New(e.cname, tuple(walk(a, gamma) for a in e.args), e.span)
        if isinstance(e, Plus):
            return Plus(walk(e.left, gamma), walk(e.right, gamma), e.span)
        raise TypeError(f"not an expression: {e!r}")

    classes = {}
    for cname, cd in p.table.classes.items():
        methods = {}
        for mname, m in cd.methods.items():
            gamma = {pn: _stored_type(pt) for pt, pn in m.params}
            if m.this_qual is not None:
                gamma["this"] = RefType(_method_this_qual(m.this_qual), cname)
            methods[mname] = MethodSig(
                m.name, m.ret, m.this_qual, m.params, walk(m.body, gamma)
            )
        classes[cname] = ClassDef(cd.name, cd.fields, methods)
    table = ClassTable(classes)
    return Program(table, walk(p.main, {}))


def _method_this_qual(q: Qualifier) -> Qualifier:
    return Qualifier.MUT if q is Qualifier.LENT else q


# ---------------------------------------------------------------------------
# Method and program typing
# ---------------------------------------------------------------------------


def method_context(table: ClassTable, cname: str, sig) -> TypeContext:
    gamma: dict = {}
    groups = []
    if sig.this_qual is not None:
        gamma["this"] = RefType(_method_this_qual(sig.this_qual), cname)
        if sig.this_qual is Qualifier.LENT:
            groups.append(frozenset(("this",)))
    for (pt, pn) in sig.params:
        gamma[pn] = _stored_type(pt)
        if isinstance(pt, RefType) and pt.qualifier is Qualifier.LENT:
            groups.append(frozenset((pn,)))
    return TypeContext.make(gamma, groups)


def typecheck_method(table: ClassTable, cname: str, mname: str, budget=None) -> Judgment:
    sig = table.method(cname, mname)
    ctx = method_context(table, cname, sig)
    checker = Checker(table, budget)
    return checker.check(ctx, sig.body, sig.ret)


def typecheck_program(p: Program, budget=None) -> dict:
    """Judgments for every method body and the main expression.

    Raises the first TypeCheckError encountered; callers wanting all errors
    can iterate classes themselves.
    """
    out = {}
    for cname, cd in p.table.classes.items():
        for mname in cd.methods:
            out[f"{cname}.{mname}"] = typecheck_method(p.table, cname, mname, budget)
    checker = Checker(p.table, budget)
    out["main"] = checker.infer(TypeContext.make({}), p.main)
    return out
