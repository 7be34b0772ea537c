"""Trace-level verification: subject reduction, progress, canonical forms,
and the two qualifier soundness properties (capsule freshness and
immutability of imm right-values)."""

import dataclasses
import json

from capslang.metatheory import (
    check_canonical_forms,
    check_capsule_theorem,
    check_immutable_theorem,
    check_progress,
    check_subject_reduction,
    verify_trace,
)
from capslang.parser import parse_expr
from capslang.reducer import ReductionTrace

from conftest import reduce_source

CLS = """
class D { int f; }
class C { mut D f1; mut D f2; }
"""


def verified(src, fuel=5000):
    p, tr = reduce_source(src, fuel=fuel)
    return p, tr, verify_trace(p.table, tr)


def doctored(tr, term):
    """A copy of the trace with one extra (bogus) step appended."""
    return dataclasses.replace(tr, steps=tr.steps + [("bogus", term)])


class TestCleanTraces:
    def test_capsule_recovery(self):
        _, _, vs = verified(
            CLS
            + """
            mut D y = new D(0);
            capsule C z = { mut D x = new D(y.f = y.f + 1); new C(x, x) };
            z
            """
        )
        assert vs == []

    def test_imm_recovery(self):
        _, _, vs = verified(
            CLS
            + """
            mut D y = new D(0);
            imm C z = { lent D x = new D(y.f); new C(x, x) };
            new C(new D(y.f), new D(0))
            """
        )
        assert vs == []

    def test_cyclic_store(self):
        _, _, vs = verified(
            """
            class B { mut B f; }
            mut B x = new B(y);
            mut B y = new B(x);
            x.f = x
            """
        )
        assert vs == []

    def test_field_assign_into_outer_store(self):
        # assigning an inner local into an outer object's field forces the
        # local to be hoisted out of the recovery block first
        p, tr = reduce_source(
            CLS
            + """
            mut D z = new D(1);
            mut C x = new C(z, z);
            capsule C y = { lent D z1 = new D(1); lent D z2 = (x.f1 = z1);
                            mut D z3 = new D(2); new C(z3, z3) };
            y
            """
        )
        assert "field-assign-move" in [r for r, _ in tr.steps]
        assert verify_trace(p.table, tr) == []


class TestDetection:
    """The checkers must actually flag broken traces, so doctor a good trace
    with a bogus final step and watch each theorem fire."""

    def _base(self):
        return verified(CLS + "mut D y = new D(0);\ny")

    def test_progress_flags_non_value_body(self):
        p, tr, _ = self._base()
        bad = doctored(tr, parse_expr("{mut D y = new D(0); mut D w = y.f; w}"))
        vs = check_progress(p.table, bad)
        assert any(v.theorem == "progress" for v in vs)

    def test_subject_reduction_flags_type_change(self):
        p, tr, _ = self._base()
        bad = doctored(tr, parse_expr("{mut C w = new C(w, w); w}"))
        vs = check_subject_reduction(p.table, bad)
        assert any(v.theorem == "subject-reduction" for v in vs)

    def test_capsule_theorem_flags_free_mut(self):
        p, tr, _ = self._base()
        bad = doctored(
            tr, parse_expr("{mut D y = new D(0); capsule C c = new C(y, y); c}")
        )
        vs = check_capsule_theorem(p.table, bad)
        assert any(v.theorem == "capsule" for v in vs)

    def test_immutable_theorem_flags_mutation(self):
        p, _, _ = self._base()
        bad = ReductionTrace(
            initial=parse_expr("{imm D z = new D(0); z}"),
            steps=[("bogus", parse_expr("{imm D z = new D(1); z}"))],
            fuel_used=1,
            done=True,
        )
        vs = check_immutable_theorem(p.table, bad)
        assert any(v.theorem == "immutable" for v in vs)

    def test_canonical_forms_flags_class_mismatch(self):
        p, tr, _ = self._base()
        bad = doctored(tr, parse_expr("{mut D y = new C(u, u); y}"))
        vs = check_canonical_forms(p.table, bad)
        assert any(v.theorem == "canonical-forms" for v in vs)


class TestViolationReporting:
    def test_json_shape(self):
        p, tr, _ = verified(CLS + "mut D y = new D(0);\ny")
        bad = doctored(tr, parse_expr("{mut D y = new C(u, u); y}"))
        (v, *_) = check_canonical_forms(p.table, bad)
        d = json.loads(v.to_json())
        assert d["theorem"] == "canonical-forms"
        assert "step" in d and "message" in d
