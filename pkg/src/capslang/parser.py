"""Concrete syntax front end.

Surface grammar:

    program  := classdecl* block
    classdecl:= "class" ID "{" fielddecl* methoddecl* "}"
    fielddecl:= ("mut"|"imm") ID ID ";" | "int" ID ";"
    methoddecl:= type ID "(" thisqual ("," param)* ")" "{" "return" expr ";" "}"
    thisqual := "mut"|"imm"|"capsule"|"lent"|"read"|"static"
    param    := type ID
    type     := qual ID | "int"
    qual     := "mut"|"imm"|"capsule"|"lent"|"read"
    expr     := block | assign
    assign   := postfix ("." ID "=" expr)? | postfix "+" postfix
    primary  := ID | INT | "new" ID "(" exprlist ")" | "(" expr ")" | block

Inside a block, `e; e'` is sugar for a declaration of a fresh discarded
variable (its declared type is filled in by a later inference pass, see
`resolve_program`).  Comments run from `//` to end of line.  The outermost
braces of the main block are optional.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Optional

from .syntax import (
    INT,
    Block,
    ClassDef,
    ClassTable,
    Decl,
    Expr,
    FieldAccess,
    FieldAssign,
    IntLit,
    IntType,
    MethodCall,
    MethodSig,
    New,
    Plus,
    Program,
    Qualifier,
    RefType,
    StaticCall,
    Type,
    Var,
    children,
)

RESERVED = {
    "class", "mut", "imm", "capsule", "lent", "read", "int", "new", "this",
    "static", "return",
}

QUAL_WORDS = {q.value: q for q in Qualifier}

_ID_START = set(string.ascii_letters + "_")
_ID_CONT = _ID_START | set(string.digits)


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, expected=()):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.expected = tuple(expected)


@dataclass(frozen=True)
class Token:
    kind: str  # "id", "int", "punct", "eof"
    text: str
    line: int
    col: int


_PUNCT = ("{", "}", "(", ")", ";", ",", "=", "+", ".")


def tokenize(text: str) -> list:
    toks = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
        elif c in " \t\r":
            i += 1
            col += 1
        elif text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
        elif c in _ID_START:
            j = i
            while j < n and text[j] in _ID_CONT:
                j += 1
            toks.append(Token("id", text[i:j], line, col))
            col += j - i
            i = j
        elif c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", text[i:j], line, col))
            col += j - i
            i = j
        elif c in _PUNCT:
            toks.append(Token("punct", c, line, col))
            i += 1
            col += 1
        else:
            raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(Token("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, toks: list):
        self.toks = toks
        self.pos = 0
        self.discards = 0

    def fresh_discard(self) -> str:
        self.discards += 1
        return f"_#{self.discards}"

    # -- token plumbing ----------------------------------------------------

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, text: str, k: int = 0) -> bool:
        return self.peek(k).text == text and self.peek(k).kind in ("punct", "id")

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t.text != text:
            raise ParseError(
                f"expected {text!r}, found {t.text!r}", t.line, t.col, (text,)
            )
        return self.next()

    def ident(self) -> Token:
        t = self.peek()
        if t.kind != "id" or t.text in RESERVED:
            raise ParseError(
                f"expected identifier, found {t.text!r}", t.line, t.col, ("ID",)
            )
        return self.next()

    # -- types --------------------------------------------------------------

    def at_type(self) -> bool:
        t = self.peek()
        if t.text == "int":
            return True
        return t.text in QUAL_WORDS and self.peek(1).kind == "id"

    def parse_type(self) -> Type:
        t = self.peek()
        if t.text == "int":
            self.next()
            return INT
        if t.text in QUAL_WORDS:
            self.next()
            cname = self.ident().text
            return RefType(QUAL_WORDS[t.text], cname)
        raise ParseError(f"expected a type, found {t.text!r}", t.line, t.col)

    # -- program ------------------------------------------------------------

    def parse_program(self) -> Program:
        classes = {}
        while self.at("class"):
            cd = self.parse_class()
            if cd.name in classes:
                t = self.peek()
                raise ParseError(f"duplicate class {cd.name}", t.line, t.col)
            classes[cd.name] = cd
        main = self.parse_main()
        t = self.peek()
        if t.kind != "eof":
            raise ParseError(f"trailing input: {t.text!r}", t.line, t.col)
        return Program(ClassTable(classes), main)

    def parse_main(self) -> Expr:
        t = self.peek()
        if t.kind == "eof":
            raise ParseError("empty main expression", t.line, t.col)
        if self.at("{"):
            return self.parse_block()
        # outermost braces omitted: parse a declaration/expression sequence
        return self.parse_block_items(terminator="eof")

    def parse_class(self) -> ClassDef:
        self.expect("class")
        name = self.ident().text
        self.expect("{")
        fields = []
        # field declarations: (mut|imm) ID ID ; | int ID ;
        while True:
            t = self.peek()
            if t.text == "int" and self.peek(1).kind == "id" and self.at(";", 2):
                self.next()
                fname = self.ident().text
                self.expect(";")
                fields.append((INT, fname))
            elif (
                t.text in ("mut", "imm")
                and self.peek(1).kind == "id"
                and self.peek(2).kind == "id"
                and self.at(";", 3)
            ):
                self.next()
                cname = self.ident().text
                fname = self.ident().text
                self.expect(";")
                fields.append((RefType(QUAL_WORDS[t.text], cname), fname))
            else:
                break
        methods = {}
        while not self.at("}"):
            m = self.parse_method()
            if m.name in methods:
                t = self.peek()
                raise ParseError(f"duplicate method {m.name} in {name}", t.line, t.col)
            methods[m.name] = m
        self.expect("}")
        return ClassDef(name, tuple(fields), methods)

    def parse_method(self) -> MethodSig:
        ret = self.parse_type()
        name = self.ident().text
        self.expect("(")
        t = self.peek()
        if t.text == "static":
            this_qual: Optional[Qualifier] = None
            self.next()
        elif t.text in QUAL_WORDS:
            this_qual = QUAL_WORDS[t.text]
            self.next()
        else:
            raise ParseError(
                f"expected this-qualifier or 'static', found {t.text!r}", t.line, t.col
            )
        params = []
        while self.at(","):
            self.next()
            ptype = self.parse_type()
            pname = self.ident().text
            params.append((ptype, pname))
        self.expect(")")
        self.expect("{")
        self.expect("return")
        body = self.parse_expr()
        self.expect(";")
        self.expect("}")
        return MethodSig(name, ret, this_qual, tuple(params), body)

    # -- expressions ----------------------------------------------------------

    def parse_block(self) -> Expr:
        self.expect("{")
        e = self.parse_block_items(terminator="}")
        self.expect("}")
        return e

    def parse_block_items(self, terminator: str) -> Expr:
        """Declarations and `e;` statements followed by a final body expression."""
        decls = []
        span = (self.peek().line, self.peek().col)
        while True:
            t = self.peek()
            # a type is one token ("int") or two ("mut C"); a declaration is
            # type ID "="
            if t.text == "int":
                is_decl = (
                    self.peek(1).kind == "id"
                    and self.peek(1).text not in RESERVED
                    and self.at("=", 2)
                )
            elif t.text in QUAL_WORDS:
                is_decl = (
                    self.peek(1).kind == "id"
                    and self.peek(2).kind == "id"
                    and self.peek(2).text not in RESERVED
                    and self.at("=", 3)
                )
            else:
                is_decl = False
            if is_decl:
                dtype = self.parse_type()
                nt = self.ident()
                self.expect("=")
                if self.at(";"):
                    raise ParseError("missing initializer", self.peek().line, self.peek().col)
                init = self.parse_expr()
                self.expect(";")
                decls.append(Decl(dtype, nt.text, init, (nt.line, nt.col)))
                continue
            if t.kind == "eof" or t.text == terminator:
                raise ParseError("expected an expression", t.line, t.col)
            e = self.parse_expr()
            if self.at(";"):
                # statement sugar: {T x = e; e'} with x fresh and unused;
                # the declared type is inferred later (dtype None placeholder)
                self.next()
                decls.append(Decl(None, self.fresh_discard(), e, (t.line, t.col)))
                continue
            body = e
            break
        if not decls:
            return body
        names = set()
        for d in decls:
            if d.name in names:
                raise ParseError(f"duplicate declaration of {d.name}", *(d.span or (0, 0)))
            names.add(d.name)
        return Block(tuple(decls), body, span)

    def parse_expr(self) -> Expr:
        if self.at("{"):
            return self.parse_block()
        left = self.parse_postfix()
        if self.at("="):
            if not isinstance(left, FieldAccess):
                t = self.peek()
                raise ParseError("assignment target must be a field access", t.line, t.col)
            self.next()
            rhs = self.parse_expr()
            return FieldAssign(left.recv, left.fname, rhs, left.span)
        while self.at("+"):
            self.next()
            right = self.parse_postfix()
            left = Plus(left, right)
        return left

    def parse_postfix(self) -> Expr:
        e = self.parse_primary()
        while self.at("."):
            self.next()
            name = self.ident()
            if self.at("("):
                self.next()
                args = self.parse_exprlist()
                self.expect(")")
                e = MethodCall(e, name.text, tuple(args), (name.line, name.col))
            else:
                e = FieldAccess(e, name.text, (name.line, name.col))
        return e

    def parse_exprlist(self) -> list:
        args = []
        if not self.at(")"):
            args.append(self.parse_expr())
            while self.at(","):
                self.next()
                args.append(self.parse_expr())
        return args

    def parse_primary(self) -> Expr:
        t = self.peek()
        if t.text == "new":
            self.next()
            cname = self.ident().text
            self.expect("(")
            args = self.parse_exprlist()
            self.expect(")")
            return New(cname, tuple(args), (t.line, t.col))
        if t.text == "(":
            self.next()
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.text == "{":
            return self.parse_block()
        if t.kind == "int":
            self.next()
            return IntLit(int(t.text), (t.line, t.col))
        if t.kind == "id" and (t.text == "this" or t.text not in RESERVED):
            self.next()
            return Var(t.text, (t.line, t.col))
        raise ParseError(f"expected an expression, found {t.text!r}", t.line, t.col)


def parse(text: str, filename: str = "<input>") -> Program:
    try:
        program = _Parser(tokenize(text)).parse_program()
    except ParseError:
        raise
    return _resolve_static_calls(program)


def parse_expr(text: str) -> Expr:
    """Parse a bare expression (no class table); test convenience."""
    p = _Parser(tokenize(text))
    e = p.parse_main()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input: {t.text!r}", t.line, t.col)
    return e


# ---------------------------------------------------------------------------
# Static-call resolution: `C.m(args)` parses as a call on Var(C); rewrite to a
# StaticCall when C names a class and is not locally bound.
# ---------------------------------------------------------------------------


def _resolve_static(e: Expr, table: ClassTable, bound: frozenset) -> Expr:
    if isinstance(e, (Var, IntLit)):
        return e
    if isinstance(e, MethodCall):
        recv = e.recv
        if (
            isinstance(recv, Var)
            and recv.name in table
            and recv.name not in bound
        ):
            return StaticCall(
                recv.name,
                e.mname,
                tuple(_resolve_static(a, table, bound) for a in e.args),
                e.span,
            )
        return MethodCall(
            _resolve_static(recv, table, bound),
            e.mname,
            tuple(_resolve_static(a, table, bound) for a in e.args),
            e.span,
        )
    if isinstance(e, StaticCall):
        return StaticCall(
            e.cname, e.mname, tuple(_resolve_static(a, table, bound) for a in e.args), e.span
        )
    if isinstance(e, FieldAccess):
        return FieldAccess(_resolve_static(e.recv, table, bound), e.fname, e.span)
    if isinstance(e, FieldAssign):
        return FieldAssign(
            _resolve_static(e.recv, table, bound),
            e.fname,
            _resolve_static(e.value, table, bound),
            e.span,
        )
    if isinstance(e, New):
        return New(e.cname, tuple(_resolve_static(a, table, bound) for a in e.args), e.span)
    if isinstance(e, Plus):
        return Plus(
            _resolve_static(e.left, table, bound),
            _resolve_static(e.right, table, bound),
            e.span,
        )
    if isinstance(e, Block):
        inner = bound | frozenset(d.name for d in e.decls)
        return Block(
            tuple(
                Decl(d.dtype, d.name, _resolve_static(d.init, table, inner), d.span)
                for d in e.decls
            ),
            _resolve_static(e.body, table, inner),
            e.span,
        )
    raise TypeError(f"not an expression: {e!r}")


def _resolve_static_calls(p: Program) -> Program:
    classes = {}
    for cname, cd in p.table.classes.items():
        methods = {}
        for mname, m in cd.methods.items():
            bound = frozenset(pn for _, pn in m.params) | frozenset(("this",))
            methods[mname] = MethodSig(
                m.name, m.ret, m.this_qual, m.params, _resolve_static(m.body, p.table, bound)
            )
        classes[cname] = ClassDef(cd.name, cd.fields, methods)
    table = ClassTable(classes)
    return Program(table, _resolve_static(p.main, table, frozenset()))


# ---------------------------------------------------------------------------
# Pretty printer
# ---------------------------------------------------------------------------


def _ident_out(name: str) -> str:
    # fresh internal names contain '#', which is not lexable; rewrite to a
    # source-legal spelling for round-tripping
    return name.replace("#", "_")


def pretty_print(e: Expr) -> str:
    if isinstance(e, Var):
        return _ident_out(e.name)
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, FieldAccess):
        return f"{_atom(e.recv)}.{e.fname}"
    if isinstance(e, MethodCall):
        args = ", ".join(pretty_print(a) for a in e.args)
        return f"{_atom(e.recv)}.{e.mname}({args})"
    if isinstance(e, StaticCall):
        args = ", ".join(pretty_print(a) for a in e.args)
        return f"{e.cname}.{e.mname}({args})"
    if isinstance(e, FieldAssign):
        return f"{_atom(e.recv)}.{e.fname}={pretty_print(e.value)}"
    if isinstance(e, New):
        args = ", ".join(pretty_print(a) for a in e.args)
        return f"new {e.cname}({args})"
    if isinstance(e, Plus):
        return f"{_atom(e.left)}+{_atom(e.right)}"
    if isinstance(e, Block):
        parts = [
            f"{d.dtype} {_ident_out(d.name)}={pretty_print(d.init)};" for d in e.decls
        ]
        parts.append(pretty_print(e.body))
        return "{" + " ".join(parts) + "}"
    raise TypeError(f"not an expression: {e!r}")


def _atom(e: Expr) -> str:
    s = pretty_print(e)
    if isinstance(e, (Var, IntLit, New, Block, FieldAccess, MethodCall, StaticCall)):
        return s
    return f"({s})"


def print_program(p: Program) -> str:
    out = []
    for cd in p.table.classes.values():
        lines = [f"class {cd.name} {{"]
        for (ft, fn) in cd.fields:
            lines.append(f"  {ft} {fn};")
        for m in cd.methods.values():
            tq = "static" if m.this_qual is None else str(m.this_qual)
            ps = "".join(f", {pt} {pn}" for pt, pn in m.params)
            lines.append(f"  {m.ret} {m.name}({tq}{ps}) {{ return {pretty_print(m.body)}; }}")
        lines.append("}")
        out.append("\n".join(lines))
    out.append(pretty_print(p.main))
    return "\n".join(out) + "\n"
