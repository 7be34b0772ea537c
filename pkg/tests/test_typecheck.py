"""Typechecker verdicts: recovery of capsule/imm types, group handling,
restricted references, and rejection of aliasing violations."""

import pytest

from capslang.parser import parse, parse_expr
from capslang.syntax import INT, Qualifier, RefType
from capslang.typecheck import (
    Checker,
    IllTyped,
    SearchExhausted,
    TypeCheckError,
    TypeContext,
    discard_type,
    resolve_implicit_types,
    typecheck_program,
    wf_context,
)

CLS = """
class D { int f; }
class C { mut D f1; mut D f2; }
"""

CLS_A = """
class A { int f; }
class D { mut A f1; mut A f2; }
class C { mut A f1; mut A f2; }
"""

CLS_NEST = """
class A { int v;
  mut A mix(mut, mut A a) { return {this.v = a.v; a}; }
  capsule A clone(read) { return new A(this.v); }
  mut A parse(static) { return new A(0); }
}
"""

NEST = CLS_NEST + """
mut A a1 = A.parse();
capsule A outerA = {
  mut A a2 = A.parse();
  capsule A nestedA = { mut A a3 = A.parse(); mut A res = %s; res.mix(a3) };
  nestedA.mix(a2)
};
outerA
"""


def check(src):
    p = resolve_implicit_types(parse(src))
    return typecheck_program(p)


def accepts(src, *need_rules):
    out = check(src)
    path = out["main"].rule_path()
    for r in need_rules:
        assert r in path, f"expected {r} in {path}"
    return out


def rejects(src):
    with pytest.raises(TypeCheckError):
        check(src)


class TestRecovery:
    def test_capsule_of_fresh_store(self):
        accepts(
            CLS
            + """
            mut D y = new D(0);
            capsule C z = { mut D x = new D(y.f); new C(x, x) };
            z
            """,
            "t-capsule",
        )

    def test_capsule_with_swap(self):
        accepts(
            CLS
            + """
            mut D y = new D(0);
            capsule C z = { mut D x = new D(y.f = y.f + 1); new C(x, x) };
            z
            """,
            "t-capsule",
            "t-swap",
        )

    def test_imm_with_restricted(self):
        accepts(
            CLS
            + """
            mut D y = new D(0);
            imm C z = { lent D x = new D(y.f); new C(x, x) };
            z
            """,
            "t-imm",
            "t-unrst",
        )

    def test_alias_escapes_capsule(self):
        rejects(
            CLS
            + """
            mut D y = new D(0);
            capsule C z = { mut D x = y; new C(x, x) };
            z
            """
        )

    def test_restricted_cannot_alias_outer_mut(self):
        rejects(
            CLS
            + """
            mut D y = new D(0);
            imm C z = { lent D x = y; new C(x, x) };
            z
            """
        )


class TestGroups:
    def test_joined_group_stays_lent(self):
        accepts(
            CLS
            + """
            mut D z = new D(1);
            mut C x = new C(z, z);
            capsule C y = { lent D z1 = new D(1); lent D z2 = (x.f1 = z1);
                            mut D z3 = new D(2); new C(z3, z3) };
            y
            """,
            "t-capsule",
        )

    def test_joined_group_cannot_be_result(self):
        rejects(
            CLS
            + """
            mut D z = new D(1);
            mut C x = new C(z, z);
            capsule C y = { lent D z1 = new D(1); lent D z2 = (x.f1 = z1);
                            mut D z3 = new D(2); new C(z1, z1) };
            y
            """
        )

    def test_swap_result_weakened_to_lent(self):
        rejects(
            CLS_A
            + """
            mut A x1 = new A(0);
            mut A x2 = new A(1);
            mut D y = new D(x1, x2);
            capsule C z = { mut A x = (y.f1 = y.f2); new C(x, x) };
            z
            """
        )


class TestNestedRecovery:
    def test_inner_slot_local(self):
        accepts(NEST % "a3")

    def test_clone_of_outer_is_capsule(self):
        accepts(NEST % "a1.clone()")

    def test_clone_of_mixed_middle(self):
        accepts(NEST % "a2.mix(a2).clone()")

    def test_outer_alias_rejected(self):
        rejects(NEST % "a1")

    def test_mix_leaks_outer_rejected(self):
        rejects(NEST % "a2.mix(a1).clone()")


class TestFrontend:
    def test_unknown_field(self):
        rejects(CLS + "mut D y = new D(0);\ny.g")

    def test_unknown_variable(self):
        rejects(CLS + "w")

    def test_wrong_arity(self):
        rejects(CLS + "mut D y = new D(0, 1);\ny")

    def test_imm_field_mutation(self):
        rejects(
            """
            class D { int n; }
            class C { imm D f; }
            mut C x = new C(new D(0));
            mut D y = new D(1);
            x.f = y
            """
        )

    def test_int_where_object_expected(self):
        rejects(CLS + "mut D y = 5;\ny")


class TestContextsAndSubtyping:
    def test_discard_type(self):
        assert discard_type(INT) == INT
        assert discard_type(RefType(Qualifier.LENT, "C")) == RefType(
            Qualifier.READ, "C"
        )
        assert discard_type(RefType(Qualifier.MUT, "C")) == RefType(
            Qualifier.MUT, "C"
        )

    def test_wf_context_rejects_lent_in_gamma(self):
        ctx = TypeContext.make({"x": RefType(Qualifier.LENT, "C")})
        assert not wf_context(ctx)

    def test_wf_context_groups(self):
        mut = RefType(Qualifier.MUT, "C")
        ok = TypeContext.make({"x": mut}, groups=(frozenset({"x"}),))
        assert wf_context(ok)

    def test_subsumption_at_var(self):
        src = CLS + "mut D y = new D(0);\nread D r = y;\nr"
        out = check(src)
        assert str(out["main"].result) == "read D"

    def test_group_permutation_irrelevant(self):
        # the same program typechecks however the lent locals are written
        a = CLS + """
            mut D y = new D(0);
            imm C z = { lent D x = new D(y.f); lent D w = new D(y.f); new C(x, w) };
            z
            """
        b = CLS + """
            mut D y = new D(0);
            imm C z = { lent D w = new D(y.f); lent D x = new D(y.f); new C(x, w) };
            z
            """
        accepts(a, "t-imm")
        accepts(b, "t-imm")


class TestBudget:
    def test_budget_exhaustion_raises(self):
        src = NEST % "a2.mix(a2).clone()"
        p = resolve_implicit_types(parse(src))
        with pytest.raises(SearchExhausted):
            typecheck_program(p, budget=5)
