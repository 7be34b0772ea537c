"""Core syntax: qualifiers, types, AST, class table, and term-level helpers.

Expressions are immutable; every node carries an optional source span that is
ignored by equality so that alpha-comparison and golden tests are unaffected
by formatting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Union


class Qualifier(Enum):
    MUT = "mut"
    IMM = "imm"
    CAPSULE = "capsule"
    LENT = "lent"
    READ = "read"

    def __str__(self) -> str:
        return self.value


# Reflexive-transitive closure of capsule<=mut<=lent<=read, capsule<=imm<=read.
_QUAL_LEQ = {
    (Qualifier.CAPSULE, Qualifier.MUT),
    (Qualifier.CAPSULE, Qualifier.IMM),
    (Qualifier.CAPSULE, Qualifier.LENT),
    (Qualifier.CAPSULE, Qualifier.READ),
    (Qualifier.MUT, Qualifier.LENT),
    (Qualifier.MUT, Qualifier.READ),
    (Qualifier.LENT, Qualifier.READ),
    (Qualifier.IMM, Qualifier.READ),
} | {(q, q) for q in Qualifier}


def qual_leq(a: Qualifier, b: Qualifier) -> bool:
    return (a, b) in _QUAL_LEQ


Span = Optional[tuple]  # (line, col), diagnostics only


@dataclass(frozen=True)
class IntType:
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class RefType:
    qualifier: Qualifier
    cname: str

    def __str__(self) -> str:
        return f"{self.qualifier} {self.cname}"


Type = Union[IntType, RefType]

INT = IntType()


def subtype(t1: Type, t2: Type) -> bool:
    """t1 <= t2: int<=int only; qualified types compare by qualifier, same class."""
    if isinstance(t1, IntType) or isinstance(t2, IntType):
        return t1 == t2
    return t1.cname == t2.cname and qual_leq(t1.qualifier, t2.qualifier)


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str
    span: Span = field(default=None, compare=False)


@dataclass(frozen=True)
class FieldAccess:
    recv: "Expr"
    fname: str
    span: Span = field(default=None, compare=False)


@dataclass(frozen=True)
class MethodCall:
    recv: "Expr"
    mname: str
    args: tuple
    span: Span = field(default=None, compare=False)


@dataclass(frozen=True)
class StaticCall:
    cname: str
    mname: str
    args: tuple
    span: Span = field(default=None, compare=False)


@dataclass(frozen=True)
class FieldAssign:
    recv: "Expr"
    fname: str
    value: "Expr"
    span: Span = field(default=None, compare=False)


@dataclass(frozen=True)
class New:
    cname: str
    args: tuple
    span: Span = field(default=None, compare=False)


@dataclass(frozen=True)
class IntLit:
    value: int
    span: Span = field(default=None, compare=False)


@dataclass(frozen=True)
class Plus:
    left: "Expr"
    right: "Expr"
    span: Span = field(default=None, compare=False)


@dataclass(frozen=True)
class Decl:
    dtype: Type
    name: str
    init: "Expr"
    span: Span = field(default=None, compare=False)


@dataclass(frozen=True)
class Block:
    decls: tuple  # of Decl, pairwise distinct names
    body: "Expr"
    span: Span = field(default=None, compare=False)


Expr = Union[
    Var, FieldAccess, MethodCall, StaticCall, FieldAssign, New, IntLit, Plus, Block
]


def children(e: Expr) -> Iterator[Expr]:
    if isinstance(e, (Var, IntLit)):
        return
    elif isinstance(e, FieldAccess):
        yield e.recv
    elif isinstance(e, MethodCall):
        yield e.recv
        yield from e.args
    elif isinstance(e, StaticCall):
        yield from e.args
    elif isinstance(e, FieldAssign):
        yield e.recv
        yield e.value
    elif isinstance(e, New):
        yield from e.args
    elif isinstance(e, Plus):
        yield e.left
        yield e.right
    elif isinstance(e, Block):
        for d in e.decls:
            yield d.init
        yield e.body
    else:
        raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Class table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodSig:
    name: str
    ret: Type
    this_qual: Optional[Qualifier]  # None for static methods
    params: tuple  # of (Type, name)
    body: Expr


@dataclass(frozen=True)
class ClassDef:
    name: str
    fields: tuple  # of (Type, name), ordered
    methods: dict  # name -> MethodSig


class ClassTable:
    def __init__(self, classes: dict):
        self.classes = classes

    def __contains__(self, cname: str) -> bool:
        return cname in self.classes

    def fields(self, cname: str) -> tuple:
        return self.classes[cname].fields

    def has_field(self, cname: str, fname: str) -> bool:
        return cname in self.classes and any(
            f == fname for _, f in self.classes[cname].fields
        )

    def field_index(self, cname: str, fname: str) -> int:
        for i, (_, f) in enumerate(self.classes[cname].fields):
            if f == fname:
                return i
        raise KeyError(f"no field {fname} in class {cname}")

    def field_type(self, cname: str, fname: str) -> Type:
        return self.classes[cname].fields[self.field_index(cname, fname)][0]

    def method(self, cname: str, mname: str) -> MethodSig:
        return self.classes[cname].methods[mname]

    def has_method(self, cname: str, mname: str) -> bool:
        return cname in self.classes and mname in self.classes[cname].methods


@dataclass(frozen=True)
class Program:
    table: ClassTable
    main: Expr


# ---------------------------------------------------------------------------
# Free variables and substitution
# ---------------------------------------------------------------------------


def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, IntLit):
        return frozenset()
    if isinstance(e, Block):
        bound = frozenset(d.name for d in e.decls)
        fv = frozenset()
        for d in e.decls:
            fv |= free_vars(d.init)
        return (fv | free_vars(e.body)) - bound
    fv = frozenset()
    for c in children(e):
        fv |= free_vars(c)
    return fv


def substitute(e: Expr, v: Expr, x: str) -> Expr:
    """Replace free occurrences of x in e by v.

    Blocks declaring x are left untouched; the caller is responsible for
    avoiding capture (alpha-renaming), as all binders here are kept globally
    fresh by the front end.
    """
    if isinstance(e, Var):
        return v if e.name == x else e
    if isinstance(e, IntLit):
        return e
    if isinstance(e, FieldAccess):
        return FieldAccess(substitute(e.recv, v, x), e.fname, e.span)
    if isinstance(e, MethodCall):
        return MethodCall(
            substitute(e.recv, v, x),
            e.mname,
            tuple(substitute(a, v, x) for a in e.args),
            e.span,
        )
    if isinstance(e, StaticCall):
        return StaticCall(
            e.cname, e.mname, tuple(substitute(a, v, x) for a in e.args), e.span
        )
    if isinstance(e, FieldAssign):
        return FieldAssign(
            substitute(e.recv, v, x), e.fname, substitute(e.value, v, x), e.span
        )
    if isinstance(e, New):
        return New(e.cname, tuple(substitute(a, v, x) for a in e.args), e.span)
    if isinstance(e, Plus):
        return Plus(substitute(e.left, v, x), substitute(e.right, v, x), e.span)
    if isinstance(e, Block):
        if x in (d.name for d in e.decls):
            return e
        return Block(
            tuple(Decl(d.dtype, d.name, substitute(d.init, v, x), d.span) for d in e.decls),
            substitute(e.body, v, x),
            e.span,
        )
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Values, right-values, evaluated declarations
# ---------------------------------------------------------------------------


def is_value(e: Expr) -> bool:
    if isinstance(e, (Var, IntLit)):
        return True
    if isinstance(e, New):
        return all(is_value(a) for a in e.args)
    if isinstance(e, Block):
        return all(is_evaluated(d) for d in e.decls) and is_value(e.body)
    return False


def is_objstate(e: Expr) -> bool:
    """Constructor invocation whose arguments are references (or int literals)."""
    return isinstance(e, New) and all(isinstance(a, (Var, IntLit)) for a in e.args)


def is_rightvalue(e: Expr) -> bool:
    if is_objstate(e):
        return True
    if isinstance(e, Block):
        return (
            all(is_evaluated(d) for d in e.decls)
            and (isinstance(e.body, Var) or is_objstate(e.body))
        )
    return False


def is_evaluated(d: Decl) -> bool:
    """Int declarations are evaluated once their right side is a literal."""
    if isinstance(d.dtype, IntType):
        return isinstance(d.init, IntLit)
    return is_rightvalue(d.init)


# ---------------------------------------------------------------------------
# Well-formedness of programs (syntactic constraints on expressions)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # "capsule-reuse" | "forward-ref" | ...
    var: str
    span: Span = field(default=None, compare=False)
    message: str = field(default="", compare=False)

    def __str__(self) -> str:
        return f"{self.kind}: {self.var}: {self.message}"


def _count_occurrences(e: Expr, x: str) -> int:
    if isinstance(e, Var):
        return 1 if e.name == x else 0
    if isinstance(e, Block) and x in (d.name for d in e.decls):
        return 0
    return sum(_count_occurrences(c, x) for c in children(e))


def _check_expr_wf(e: Expr, capsule_scope: dict, out: list) -> None:
    if isinstance(e, Block):
        names = [d.name for d in e.decls]
        # capsule-typed locals: at most one occurrence in their scope
        for d in e.decls:
            if isinstance(d.dtype, RefType) and d.dtype.qualifier is Qualifier.CAPSULE:
                n = sum(_count_occurrences(d2.init, d.name) for d2 in e.decls)
                n += _count_occurrences(e.body, d.name)
                if n > 1:
                    out.append(
                        Violation(
                            "capsule-reuse",
                            d.name,
                            d.span,
                            f"capsule variable {d.name} occurs {n} times in its scope",
                        )
                    )
        # forward (or self) references only between evaluated declarations
        index = {n: i for i, n in enumerate(names)}
        for i, d in enumerate(e.decls):
            for y in free_vars(d.init):
                j = index.get(y)
                if j is None or j < i:
                    continue
                if not (is_evaluated(d) and is_evaluated(e.decls[j])):
                    out.append(
                        Violation(
                            "forward-ref",
                            y,
                            d.span,
                            f"declaration of {d.name} refers forward to {y} "
                            "but both are not evaluated",
                        )
                    )
    for c in children(e):
        _check_expr_wf(c, capsule_scope, out)


def validate_wellformedness(p: Program) -> list:
    """All violations of the syntactic constraints (capsule linearity and the
    forward-reference restriction), over method bodies and the main expression."""
    out: list = []
    for cd in p.table.classes.values():
        for m in cd.methods.values():
            for (pt, pn) in m.params:
                if isinstance(pt, RefType) and pt.qualifier is Qualifier.CAPSULE:
                    if _count_occurrences(m.body, pn) > 1:
                        out.append(
                            Violation(
                                "capsule-reuse",
                                pn,
                                None,
                                f"capsule parameter {pn} of {cd.name}.{m.name} "
                                "occurs more than once",
                            )
                        )
            _check_expr_wf(m.body, {}, out)
    _check_expr_wf(p.main, {}, out)
    return out


def validate_classtable(ct: ClassTable) -> list:
    """Field declarations may only be `imm C`, `mut C`, or `int`."""
    out: list = []
    for cd in ct.classes.values():
        seen = set()
        for (ft, fn) in cd.fields:
            if fn in seen:
                out.append(Violation("dup-field", fn, None, f"duplicate field in {cd.name}"))
            seen.add(fn)
            if isinstance(ft, RefType):
                if ft.qualifier not in (Qualifier.MUT, Qualifier.IMM):
                    out.append(
                        Violation(
                            "bad-field-qualifier",
                            fn,
                            None,
                            f"field {cd.name}.{fn} has qualifier {ft.qualifier}; "
                            "only mut/imm/int fields are allowed",
                        )
                    )
                if ft.cname not in ct:
                    out.append(Violation("unknown-class", fn, None, f"field type {ft}"))
    return out
