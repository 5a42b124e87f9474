"""Standard catalog of corner spaces and blowdown/projection maps.

Builds the double space, its heat-space extension, the triple space, and the
three lifted projections, verifying internal consistency (disjointness of
the codimension-2 time centers, nonnegativity, b-fibration certificates for
the projections) along the way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .corner_geometry import (
    BlowupCenter,
    BMap,
    CornerGeometryError,
    CornerSpace,
    ProjectionSquare,
    Variable,
    base_space,
    blow_up,
    centers_disjoint,
    certify_b_fibration,
    compose_bmaps,
    extend_with_generator,
    solve_projection_lift,
)

Frac = Fraction


@dataclass
class Catalog:
    spaces: dict[str, CornerSpace] = field(default_factory=dict)
    maps: dict[str, BMap] = field(default_factory=dict)
    flags: dict[str, str] = field(default_factory=dict)

    def space(self, name: str) -> CornerSpace:
        if name not in self.spaces:
            raise CornerGeometryError(f"catalog: unknown space {name!r}")
        return self.spaces[name]

    def map(self, name: str) -> BMap:
        if name not in self.maps:
            raise CornerGeometryError(f"catalog: unknown map {name!r}")
        return self.maps[name]


def _double_space_chain(cat: Catalog) -> None:
    gens = [
        Variable("x"), Variable("x'"),
        Variable("y", boundary=False), Variable("y'", boundary=False),
        Variable("z", boundary=False), Variable("z'", boundary=False),
    ]
    m2 = base_space("M2", gens, face_labels={"x": "rf", "x'": "lf"})
    center_b = BlowupCenter("B", vanishing=("x", "x'"), label="ff", boundary_center=True)
    m2b, beta_b = blow_up(m2, center_b)
    center_phi = BlowupCenter(
        "phi", vanishing=("ff",), identifications=(("x", "x'"), ("y", "y'")),
        label="fd", boundary_center=True,
    )
    m2phi, beta_phi_b = blow_up(m2b, center_phi)

    cat.spaces["M2"] = m2
    cat.spaces["M2_b"] = m2b
    cat.spaces["M2_phi"] = m2phi
    cat.maps["beta_b"] = beta_b
    cat.maps["beta_phi-b"] = beta_phi_b
    cat.maps["beta_phi"] = compose_bmaps(beta_b, beta_phi_b)
    cat.maps["beta_phi"].name = "beta_phi"


def _heat_space_chain(cat: Catalog) -> None:
    m2_time = extend_with_generator(cat.space("M2"), Variable("tau", kind="temporal"), "tf")
    m2_time.name = "M2*time"
    center_b = BlowupCenter("B", vanishing=("x", "x'"), label="ff", boundary_center=True)
    m2b_t, beta_b_t = blow_up(m2_time, center_b)
    center_phi = BlowupCenter(
        "phi", vanishing=("ff",), identifications=(("x", "x'"), ("y", "y'")),
        label="fd", boundary_center=True,
    )
    m2phi_t, beta_phib_t = blow_up(m2b_t, center_phi)
    m2phi_t.name = "M2_phi*time"
    center_d = BlowupCenter(
        "D", vanishing=("tau",),
        identifications=(("x", "x'"), ("y", "y'"), ("z", "z'")),
        label="td", boundary_center=True,
    )
    hm_phi, beta_prime = blow_up(m2phi_t, center_d)
    hm_phi.name = "HM_phi"

    cat.spaces["M2_phi_time"] = m2phi_t
    cat.spaces["HM_phi"] = hm_phi
    cat.maps["beta_b_time"] = beta_b_t
    cat.maps["beta_phi-b_time"] = beta_phib_t
    cat.maps["beta_phi_time"] = compose_bmaps(beta_b_t, beta_phib_t)
    cat.maps["beta_phi_time"].name = "beta_phi_time"
    cat.maps["beta_prime_phi"] = beta_prime
    cat.maps["beta"] = compose_bmaps(cat.maps["beta_phi_time"], beta_prime)
    cat.maps["beta"].name = "beta"


def _triple_space_chain(cat: Catalog) -> None:
    gens = [
        Variable("x"), Variable("x'"), Variable("x''"),
        Variable("t'", kind="temporal", weight=2),
        Variable("t''", kind="temporal", weight=2),
        Variable("y", boundary=False), Variable("y'", boundary=False), Variable("y''", boundary=False),
        Variable("z", boundary=False), Variable("z'", boundary=False), Variable("z''", boundary=False),
    ]
    m3 = base_space(
        "M3*time2", gens,
        face_labels={"x": "100", "x'": "010", "x''": "001", "t'": "tau'", "t''": "tau''"},
    )

    center_f = BlowupCenter("F", vanishing=("t'", "t''", "x", "x'", "x''"),
                            label="111", boundary_center=True)
    m3b, beta_1 = blow_up(m3, center_f)
    m3b.name = "M3_b"

    center_fo = BlowupCenter("F_O", vanishing=("t'", "t''"), label="tau_O",
                             face_weight=2, boundary_center=True)
    m3b_o, step_fo = blow_up(m3b, center_fo)

    center_fc = BlowupCenter("F_C", vanishing=("t'", "t''", "x", "x''"),
                             label="101", boundary_center=True)
    center_fl = BlowupCenter("F_L", vanishing=("t''", "x'", "x''"),
                             label="011", boundary_center=True)
    center_fr = BlowupCenter("F_R", vanishing=("t'", "x", "x'"),
                             label="110", boundary_center=True)

    for a, b in ((center_fc, center_fl), (center_fc, center_fr), (center_fl, center_fr)):
        if not centers_disjoint(m3b_o, a, b):
            raise CornerGeometryError(f"catalog: {a.id} and {b.id} fail the disjointness check")
    cat.flags["triple-disjointness"] = "F_C, F_L, F_R pairwise disjoint after the F and F_O blowups"

    space, step_fc = blow_up(m3b_o, center_fc)
    space, step_fl = blow_up(space, center_fl)
    m3bt, step_fr = blow_up(space, center_fr)
    m3bt.name = "M3_bt"
    beta_2 = compose_bmaps(compose_bmaps(compose_bmaps(step_fo, step_fc), step_fl), step_fr)
    beta_2.name = "beta_2"

    center_o = BlowupCenter(
        "O_center", vanishing=("111",),
        identifications=(("x", "x'"), ("x", "x''"), ("y", "y'"), ("y", "y''")),
        label="O", boundary_center=True,
    )
    space, step_o = blow_up(m3bt, center_o)
    center_csc = BlowupCenter("F_C_Sc", vanishing=("101",),
                              identifications=(("x", "x''"), ("y", "y''")),
                              label="101^Sc", boundary_center=True)
    space, step_csc = blow_up(space, center_csc)
    center_lsc = BlowupCenter("F_L_Sc", vanishing=("011",),
                              identifications=(("x'", "x''"), ("y'", "y''")),
                              label="011^Sc", boundary_center=True)
    space, step_lsc = blow_up(space, center_lsc)
    center_rsc = BlowupCenter("F_R_Sc", vanishing=("110",),
                              identifications=(("x", "x'"), ("y", "y'")),
                              label="110^Sc", boundary_center=True)
    hm3, step_rsc = blow_up(space, center_rsc)
    hm3.name = "HM3_phi"
    beta_3 = compose_bmaps(compose_bmaps(compose_bmaps(step_o, step_csc), step_lsc), step_rsc)
    beta_3.name = "beta_3"

    beta_tr = compose_bmaps(compose_bmaps(beta_1, beta_2), beta_3)
    beta_tr.name = "beta_Tr"

    cat.spaces["M3"] = m3
    cat.spaces["M3_b"] = m3b
    cat.spaces["M3_bt"] = m3bt
    cat.spaces["HM3_phi"] = hm3
    cat.maps["beta_1"] = beta_1
    beta_1.name = "beta_1"
    cat.maps["beta_2"] = beta_2
    cat.maps["beta_3"] = beta_3
    cat.maps["beta_Tr"] = beta_tr


def _projection_target(tag: str) -> CornerSpace:
    gens = [
        Variable("x"), Variable("x'"),
        Variable("t", kind="temporal", weight=2),
        Variable("y", boundary=False), Variable("y'", boundary=False),
    ]
    space = base_space(f"heat_target_{tag}", gens,
                       face_labels={"x": "10", "x'": "01", "t": "tf"})
    space, _ = blow_up(space, BlowupCenter("B", vanishing=("x", "x'"), label="11",
                                           boundary_center=True))
    space, _ = blow_up(space, BlowupCenter(
        "phi", vanishing=("11",), identifications=(("x", "x'"), ("y", "y'")),
        label="11^Sc", boundary_center=True,
    ))
    space.name = f"heat_target_{tag}"
    return space


# The corner-compatible temporal normalization on the projection targets:
# the time coordinate factors through tf, ff and fd with the weights below.
TIME_ADAPTATION = {"t": {"tf": Frac(1), "11": Frac(2), "11^Sc": Frac(2)}}


def _projections(cat: Catalog) -> None:
    hm3 = cat.space("HM3_phi")
    base_maps = {
        "Pi_C": {"x": [{"x": Frac(1)}], "x'": [{"x''": Frac(1)}],
                 "y": [{"y": Frac(1)}], "y'": [{"y''": Frac(1)}],
                 "t": [{"t'": Frac(1)}, {"t''": Frac(1)}]},
        "Pi_L": {"x": [{"x": Frac(1)}], "x'": [{"x'": Frac(1)}],
                 "y": [{"y": Frac(1)}], "y'": [{"y'": Frac(1)}],
                 "t": [{"t'": Frac(1)}]},
        "Pi_R": {"x": [{"x'": Frac(1)}], "x'": [{"x''": Frac(1)}],
                 "y": [{"y'": Frac(1)}], "y'": [{"y''": Frac(1)}],
                 "t": [{"t''": Frac(1)}]},
    }
    for tag in ("C", "L", "R"):
        target = _projection_target(tag)
        cat.spaces[f"heat_target_{tag}"] = target
        square = ProjectionSquare(
            source=hm3, target=target, base_map=base_maps[f"Pi_{tag}"],
            adapted=TIME_ADAPTATION, b_submersion=True, name=f"Pi_{tag}",
        )
        pi = solve_projection_lift(square)
        cert = certify_b_fibration(pi)
        if not (cert.kind == "b-fibration" and cert.ok):
            raise CornerGeometryError(f"catalog: Pi_{tag} is not a b-fibration: {cert}")
        cat.maps[f"Pi_{tag}"] = pi


_CATALOG: Catalog | None = None


def build_catalog(fresh: bool = False) -> Catalog:
    """Assemble the full catalog; cached, since all values are immutable."""
    global _CATALOG
    if _CATALOG is not None and not fresh:
        return _CATALOG
    cat = Catalog()
    _double_space_chain(cat)
    _heat_space_chain(cat)
    _triple_space_chain(cat)
    _projections(cat)
    expected = {
        "HM3_phi": 14, "M3_bt": 10, "M3_b": 6, "M2_b": 3, "M2_phi": 4, "HM_phi": 6,
    }
    for name, n in expected.items():
        have = len(cat.space(name).faces)
        if have != n:
            raise CornerGeometryError(f"catalog: {name} has {have} faces, expected {n}")
    _CATALOG = cat
    return cat
