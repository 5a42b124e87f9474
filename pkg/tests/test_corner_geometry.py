"""Blowup-calculus unit tests: lift rules, golden tables, certificates."""

from __future__ import annotations

import json
from fractions import Fraction
from importlib import resources

import pytest
from hypothesis import given, strategies as st

from phiheat.catalog import build_catalog
from phiheat.corner_geometry import (
    BlowupCenter,
    BMap,
    CornerGeometryError,
    ProjectionSquare,
    Variable,
    base_space,
    blow_up,
    certify_b_fibration,
    compose_bmaps,
    extend_with_generator,
    identity_bmap,
    lift_monomial,
    lift_sum,
    solve_projection_lift,
)

F = Fraction


def load_fixture(name):
    with resources.files("phiheat.fixtures").joinpath(name).open() as fh:
        return json.load(fh)


def as_fracs(d):
    return {k: F(v) for k, v in d.items()}


@pytest.fixture(scope="module")
def cat():
    return build_catalog()


# -- elementary blowups ------------------------------------------------------


def quadrant():
    return base_space("Q", [Variable("x"), Variable("x'")],
                      face_labels={"x": "rf", "x'": "lf"})


def test_corner_blowup_lifts_x_through_both_faces():
    space, bmap = blow_up(quadrant(), BlowupCenter("B", ("x", "x'"), label="ff"))
    assert lift_monomial(bmap, {"x": 1}) == {"rf": F(1), "ff": F(1)}
    assert lift_monomial(bmap, {"x'": 1}) == {"lf": F(1), "ff": F(1)}
    assert [f.label for f in space.faces] == ["rf", "lf", "ff"]


def test_interior_blowup_adds_zero_column():
    sp = base_space("Q2", [Variable("x"), Variable("u", boundary=False),
                           Variable("v", boundary=False)])
    space, bmap = blow_up(sp, BlowupCenter("diag", (), identifications=(("u", "v"),)))
    assert bmap.exponent("x", "diag") == 0
    assert lift_monomial(bmap, {"x": 1}) == {"x": F(1)}
    assert space.has_face("diag")


def test_degenerate_boundary_center_rejected():
    sp = base_space("Q2", [Variable("x"), Variable("u", boundary=False),
                           Variable("v", boundary=False)])
    with pytest.raises(CornerGeometryError, match="degenerate"):
        blow_up(sp, BlowupCenter("diag", (), identifications=(("u", "v"),),
                                 boundary_center=True))


def test_unknown_symbol_rejected():
    with pytest.raises(CornerGeometryError, match="unknown symbol"):
        blow_up(quadrant(), BlowupCenter("Z", ("x", "nope")))


def test_mixed_kind_identification_rejected():
    sp = base_space("Qt", [Variable("x"), Variable("t", kind="temporal", weight=2)])
    with pytest.raises(CornerGeometryError, match="mixes kinds"):
        blow_up(sp, BlowupCenter("Z", ("x",), identifications=(("x", "t"),)))


def test_heat_diagonal_blowup_lifts_tau_to_tf_td(cat):
    # the time variable picks up exactly the temporal-diagonal face
    beta_prime = cat.map("beta_prime_phi")
    assert lift_monomial(beta_prime, {"tau": 1}) == {"tf": F(1), "td": F(1)}
    assert lift_monomial(beta_prime, {"fd": 1}) == {"fd": F(1)}


def test_two_step_program_equals_composed_single_steps():
    # brute force both routes on a two-variable corner
    sp = quadrant()
    s1, m1 = blow_up(sp, BlowupCenter("B", ("x", "x'"), label="ff"))
    s2, m2 = blow_up(s1, BlowupCenter("C", ("x", "ff"), label="g"))
    comp = compose_bmaps(m1, m2)
    for mono in ({"x": 1}, {"x'": 1}, {"x": 2, "x'": 3}):
        direct = {f: e for f, e in s2.named_row("x").items()} if mono == {"x": 1} else None
        via = lift_monomial(comp, mono)
        expanded = {}
        for g, e in mono.items():
            for f, c in s2.named_row(g).items():
                expanded[f] = expanded.get(f, F(0)) + e * c
        assert via == {k: v for k, v in expanded.items() if v}
        if direct is not None:
            assert via == direct


def test_compose_with_identity_is_identity(cat):
    bt = cat.map("beta_Tr")
    left = compose_bmaps(identity_bmap(bt.target), bt)
    right = compose_bmaps(bt, identity_bmap(bt.source))
    for m in (left, right):
        assert m.alpha == bt.alpha


def test_lift_of_constant_monomial_is_zero_vector(cat):
    assert lift_monomial(cat.map("beta_Tr"), {}) == {}


# -- golden tables -----------------------------------------------------------


def test_golden_def_triple(cat):
    fix = load_fixture("def_triple.json")
    bt = cat.map(fix["map"])
    for mono, expected in fix["entries"].items():
        assert lift_monomial(bt, {mono: 1}) == as_fracs(expected), mono


def test_golden_eq_05_first_two_lines(cat):
    fix = load_fixture("eq_05.json")
    bt = cat.map(fix["map"])
    for mono, expected in fix["entries"].items():
        assert lift_monomial(bt, {mono: 1}) == as_fracs(expected), mono


def test_golden_eq_05_flagged_sum_line(cat):
    fix = load_fixture("eq_05.json")
    bt = cat.map(fix["map"])
    entry = fix["sum_entries"]["t'+t''"]
    got = lift_sum(bt, entry["terms"])
    assert got == as_fracs(entry["expected"])
    assert "flag" in entry


def test_golden_projection_exponents_eq_0_3(cat):
    fix = load_fixture("eq_0_3.json")
    for pi_name, rows in fix["entries"].items():
        pi = cat.map(pi_name)
        for face, expected in rows.items():
            assert lift_monomial(pi, {face: 1}) == as_fracs(expected), (pi_name, face)


def test_golden_time_lifts(cat):
    fix = load_fixture("tlifts.json")
    for pi_name, rows in fix["entries"].items():
        pi = cat.map(pi_name)
        for face, expected in rows.items():
            assert lift_monomial(pi, {face: 1}) == as_fracs(expected), (pi_name, face)
    variants = fix["variant_entries"]["Pi_R"]
    got = lift_monomial(cat.map("Pi_R"), {"tf": 1})
    assert got == as_fracs(variants["tf_symmetric"])
    printed = as_fracs(variants["tf_as_printed"])
    sym = as_fracs(variants["tf_symmetric"])
    diff = {k for k in printed.keys() | sym.keys() if printed.get(k) != sym.get(k)}
    assert diff == {"tau'", "tau''"}


# -- projections and certificates --------------------------------------------


def test_projections_certified_b_fibrations(cat):
    for name in ("Pi_C", "Pi_L", "Pi_R"):
        cert = certify_b_fibration(cat.map(name))
        assert cert.kind == "b-fibration" and cert.ok, name


def test_counterexample_map_fails_column_condition():
    # one source face feeding two target faces: x -> x * x' style exponents
    src = quadrant()
    tgt = quadrant()
    bad = BMap(src, tgt, {"rf": {"rf": F(1), "lf": F(1)}, "lf": {"rf": F(1)}},
               b_submersion=True, name="bad")
    cert = certify_b_fibration(bad)
    assert not (cert.kind == "b-fibration" and cert.ok)
    assert "rf" in cert.witness_columns


def test_identity_map_certified():
    cert = certify_b_fibration(identity_bmap(quadrant()))
    assert cert.kind == "b-fibration" and cert.ok


def test_blowdowns_not_b_fibrations(cat):
    cert = certify_b_fibration(cat.map("beta_Tr"))
    assert not (cert.kind == "b-fibration" and cert.ok)


def test_identity_square_solves_to_identity():
    sp, _ = blow_up(quadrant(), BlowupCenter("B", ("x", "x'"), label="ff"))
    square = ProjectionSquare(
        source=sp, target=sp,
        base_map={"x": [{"x": F(1)}], "x'": [{"x'": F(1)}]},
    )
    got = solve_projection_lift(square)
    assert got.alpha == identity_bmap(sp).alpha


def test_inconsistent_square_reports_offending_face(cat):
    # wiring the L-projection to the wrong time increment breaks the system
    from phiheat.catalog import TIME_ADAPTATION, _projection_target

    square = ProjectionSquare(
        source=cat.space("HM3_phi"), target=_projection_target("bad"),
        base_map={"x": [{"x": F(1)}], "x'": [{"x'": F(1)}],
                  "y": [{"y": F(1)}], "y'": [{"y'": F(1)}],
                  "t": [{"t''": F(1)}]},
        adapted=TIME_ADAPTATION,
    )
    with pytest.raises(CornerGeometryError, match="negative|underdetermined|inconsistent"):
        solve_projection_lift(square)


# -- invariants ---------------------------------------------------------------


def test_containment_rule_soundness(cat):
    # exponent of a generator at a blowup face is weight(v)/weight(F) exactly
    # when the recorded center is contained in {v=0} under relation closure
    for name in ("M2_b", "M2_phi", "HM_phi", "M3_b", "M3_bt", "HM3_phi"):
        space = cat.space(name)
        by_id = {c.face_label: c.id for c in space.program}
        for gen in space.generators:
            if not gen.boundary:
                continue
            row = space.named_row(gen.name)
            for face in space.faces:
                got = row.get(face.label, F(0))
                if face.origin == gen.name:
                    expected = F(gen.weight, face.weight)
                elif face.label in by_id:
                    contained = space.center_in_zero_set(by_id[face.label], gen.name)
                    expected = F(gen.weight, face.weight) if contained else F(0)
                else:
                    expected = F(0)
                assert got == expected, (name, gen.name, face.label)


def test_functoriality_of_lifts_on_catalog_stages(cat):
    b1, b2, b3 = cat.map("beta_1"), cat.map("beta_2"), cat.map("beta_3")
    composite = compose_bmaps(compose_bmaps(b1, b2), b3)
    monos = [{"x": F(1)}, {"t'": F(1)}, {"x''": F(2), "t''": F(1)},
             {"x": F(1, 2), "x'": F(3)}]
    for m in monos:
        step = lift_monomial(b1, m)
        step = lift_monomial(b2, {k: v for k, v in step.items()})
        step = lift_monomial(b3, {k: v for k, v in step.items()})
        assert step == lift_monomial(composite, m)
        assert step == lift_monomial(cat.map("beta_Tr"), m)


@given(
    st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=1, max_size=4, unique=True).flatmap(
        lambda tgts: st.lists(
            st.tuples(st.sampled_from(tgts), st.sampled_from(["p", "q", "r"]),
                      st.integers(min_value=1, max_value=3)),
            min_size=1, max_size=5,
        )
    )
)
def test_b_fibration_columns_closed_under_composition(entries):
    # a column-sparse nonnegative matrix composed with another stays column sparse
    tgt_faces = sorted({e[0] for e in entries})
    src_faces = ["p", "q", "r"]
    tgt = base_space("T", [Variable(f) for f in tgt_faces])
    src = base_space("S", [Variable(f) for f in src_faces])
    mid = base_space("M", [Variable(f) for f in ["u", "v"]])

    used = {}
    alpha = {}
    ok = True
    for i, j, e in entries:
        if used.get(j, i) != i:
            ok = False
        used[j] = i
        alpha.setdefault(i, {})[j] = F(e)
    if not ok:
        return
    f = BMap(src, tgt, alpha, b_submersion=True)
    g = BMap(mid, src, {"p": {"u": F(1)}, "q": {"v": F(2)}, "r": {}}, b_submersion=True)
    assert certify_b_fibration(f).ok
    assert certify_b_fibration(g).ok
    comp = compose_bmaps(f, g)
    cert = certify_b_fibration(comp)
    assert cert.kind == "b-fibration" and cert.ok


def test_catalog_face_counts(cat):
    assert [f.label for f in cat.space("M2_b").faces] == ["rf", "lf", "ff"]
    assert len(cat.space("HM3_phi").faces) == 14
    assert set(cat.space("HM3_phi").face_labels()) == {
        "111", "110", "101", "011", "100", "010", "001",
        "110^Sc", "101^Sc", "011^Sc", "O", "tau_O", "tau'", "tau''",
    }
    assert set(cat.space("HM_phi").face_labels()) == {"lf", "rf", "ff", "fd", "tf", "td"}


def test_disjointness_flag_recorded(cat):
    assert "triple-disjointness" in cat.flags
