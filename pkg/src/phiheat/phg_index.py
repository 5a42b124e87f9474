"""Exact arithmetic of polyhomogeneous index sets and families.

An index set is stored by its minimal finite generators (gamma, p); the set
it denotes is the closure under integer upward shifts of gamma and downward
steps of the log power p.  The empty set is the infinite-order flag.  All
exponents are rational.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .catalog import Catalog, build_catalog
from .corner_geometry import BMap, certify_b_fibration, lift_monomial

Frac = Fraction

HEAT_FACE_ORDER = ("lf", "rf", "ff", "fd", "tf", "td")


class PhgError(ValueError):
    """Raised on invalid index-set data or inapplicable operations."""


def _dominated(g1: tuple[Fraction, int], g2: tuple[Fraction, int]) -> bool:
    """g1 lies in the closure generated by g2."""
    d = g1[0] - g2[0]
    return d.denominator == 1 and d >= 0 and g1[1] <= g2[1]


def _normalize(gens: Iterable[tuple[Fraction, int]]) -> tuple[tuple[Fraction, int], ...]:
    gens = [(Frac(g), int(p)) for g, p in gens]
    for g, p in gens:
        if p < 0:
            raise PhgError(f"negative log power in generator ({g},{p})")
    out = []
    for cand in gens:
        if any(cand != other and _dominated(cand, other) for other in gens):
            continue
        if cand not in out:
            out.append(cand)
    return tuple(sorted(out))


@dataclass(frozen=True)
class IndexSet:
    """Minimal generators with implicit (gamma + N0, <= p) closure; the empty
    tuple is vanishing to infinite order."""

    generators: tuple[tuple[Fraction, int], ...] = ()

    @staticmethod
    def of(*gens: tuple[Fraction | int, int]) -> "IndexSet":
        return IndexSet(_normalize((Frac(g), p) for g, p in gens))

    @staticmethod
    def smooth(shift: Fraction | int = 0) -> "IndexSet":
        return IndexSet.of((Frac(shift), 0))

    @staticmethod
    def infinite() -> "IndexSet":
        return IndexSet(())

    def __post_init__(self):
        object.__setattr__(self, "generators", _normalize(self.generators))

    @property
    def is_infinite(self) -> bool:
        return not self.generators

    def leading(self) -> Fraction | None:
        """Smallest exponent, or None for the infinite-order set."""
        if self.is_infinite:
            return None
        return min(g for g, _ in self.generators)

    def contains(self, gamma: Fraction | int, p: int) -> bool:
        return any(_dominated((Frac(gamma), p), g) for g in self.generators)

    def shift(self, d: Fraction | int) -> "IndexSet":
        return IndexSet(tuple((g + Frac(d), p) for g, p in self.generators))

    def scale(self, c: Fraction | int) -> "IndexSet":
        c = Frac(c)
        if c <= 0:
            raise PhgError(f"index-set scaling requires a positive factor, got {c}")
        return IndexSet(tuple((g * c, p) for g, p in self.generators))

    def union(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(self.generators + other.generators)

    def minkowski(self, other: "IndexSet") -> "IndexSet":
        """Exponent sums with added log powers; infinite order absorbs."""
        if self.is_infinite or other.is_infinite:
            return IndexSet.infinite()
        return IndexSet(tuple(
            (g1 + g2, p1 + p2)
            for g1, p1 in self.generators for g2, p2 in other.generators
        ))

    def __str__(self):
        if self.is_infinite:
            return "infinite"
        return "{" + ", ".join(f"({g},{p})" for g, p in self.generators) + "}"


def extended_union(e: IndexSet, f: IndexSet) -> IndexSet:
    """Union plus log-bumped coincidences.

    A coincidence is any exponent shared by the two closures, i.e. any pair
    of generators whose exponents differ by an integer; the shared part
    starts at the larger of the two and carries log power p + q + 1.
    """
    extra = []
    for g1, p1 in e.generators:
        for g2, p2 in f.generators:
            if (g1 - g2).denominator == 1:
                extra.append((max(g1, g2), p1 + p2 + 1))
    return IndexSet(e.generators + f.generators + tuple(extra))


@dataclass(frozen=True)
class IndexFamily:
    """One index set per boundary face of a named corner space."""

    space: str
    sets: Mapping[str, IndexSet]

    def __post_init__(self):
        object.__setattr__(self, "sets", dict(self.sets))

    def at(self, face: str) -> IndexSet:
        if face not in self.sets:
            raise PhgError(f"family on {self.space}: no face {face!r}")
        return self.sets[face]

    def with_face(self, face: str, s: IndexSet) -> "IndexFamily":
        d = dict(self.sets)
        d[face] = s
        return IndexFamily(self.space, d)

    @staticmethod
    def constant(space_name: str, faces: Iterable[str], s: IndexSet) -> "IndexFamily":
        return IndexFamily(space_name, {f: s for f in faces})


@dataclass(frozen=True)
class DensityWeight:
    """Monomial weight of a density relative to a b-density, as named
    exponents per face; smooth positive prefactors are dropped."""

    space: str
    exponents: Mapping[str, Fraction]

    def __post_init__(self):
        object.__setattr__(
            self, "exponents",
            {f: Frac(e) for f, e in self.exponents.items() if Frac(e) != 0},
        )

    def at(self, face: str) -> Fraction:
        return self.exponents.get(face, Frac(0))


INFINITY = None  # ell sentinel


@dataclass(frozen=True)
class KernelOrder:
    """Heat-calculus order data: front-face order a, temporal order ell
    (None meaning infinite), ambient dimension m."""

    a: Fraction
    ell: Fraction | None
    m: int

    def __post_init__(self):
        object.__setattr__(self, "a", Frac(self.a))
        if self.ell is not None:
            object.__setattr__(self, "ell", Frac(self.ell))

    def family(self) -> IndexFamily:
        """The index family on the heat space: smooth shifted by a-3 at fd,
        m-shifted temporal order at td, infinite order at lf, rf, ff, tf."""
        sets = {f: IndexSet.infinite() for f in HEAT_FACE_ORDER}
        sets["fd"] = IndexSet.smooth(self.a - 3)
        sets["td"] = (IndexSet.infinite() if self.ell is None
                      else IndexSet.smooth(self.ell - self.m))
        return IndexFamily("HM_phi", sets)

    def __str__(self):
        ell = "inf" if self.ell is None else str(self.ell)
        return f"H^({self.a},{ell})[m={self.m}]"


def pullback_family(bmap: BMap, fam: IndexFamily) -> IndexFamily:
    """Pull an index family back along a b-map: at a source face, the
    Minkowski sum of the scaled target sets feeding it; untouched faces are
    smooth."""
    if fam.space != bmap.target.name:
        raise PhgError(f"pullback: family on {fam.space!r}, map targets {bmap.target.name!r}")
    out = {}
    for j in bmap.source.face_labels():
        acc = None
        for i in bmap.target.face_labels():
            a = bmap.exponent(i, j)
            if a > 0:
                s = fam.at(i).scale(a)
                acc = s if acc is None else acc.minkowski(s)
        out[j] = IndexSet.smooth() if acc is None else acc
    return IndexFamily(bmap.source.name, out)


@dataclass(frozen=True)
class IntegrabilityVerdict:
    ok: bool
    failures: tuple[tuple[str, Fraction], ...] = ()

    def __str__(self):
        if self.ok:
            return "integrable"
        fails = ", ".join(f"{f} (exponent {g})" for f, g in self.failures)
        return f"not integrable at: {fails}"


def pushforward_family(
    bmap: BMap,
    fam: IndexFamily,
    relative_density: DensityWeight | None = None,
) -> tuple[IndexFamily, IntegrabilityVerdict]:
    """Push a family forward along a certified b-fibration against a
    b-density: at a target face, the extended union of the rescaled source
    sets mapping onto it.  Faces mapping to the interior must carry strictly
    positive exponents; violations are reported by face and generator."""
    cert = certify_b_fibration(bmap)
    if not (cert.kind == "b-fibration" and cert.ok):
        raise PhgError(f"pushforward requires a certified b-fibration, got: {cert}")
    if fam.space != bmap.source.name:
        raise PhgError(f"pushforward: family on {fam.space!r}, map source {bmap.source.name!r}")
    if relative_density is not None and relative_density.space != fam.space:
        raise PhgError("pushforward: density lives on the wrong space")

    eff = {
        j: fam.at(j).shift(relative_density.at(j)) if relative_density else fam.at(j)
        for j in bmap.source.face_labels()
    }

    failures = []
    for j in bmap.source.face_labels():
        col = [i for i in bmap.target.face_labels() if bmap.exponent(i, j) > 0]
        if col:
            continue
        s = eff[j]
        if s.is_infinite:
            continue
        lead = s.leading()
        if lead <= 0:
            failures.append((j, lead))
    verdict = IntegrabilityVerdict(ok=not failures, failures=tuple(failures))

    out = {}
    for i in bmap.target.face_labels():
        acc = None
        for j in bmap.source.face_labels():
            a = bmap.exponent(i, j)
            if a > 0:
                s = eff[j].scale(Frac(1) / a)
                acc = s if acc is None else extended_union(acc, s)
        out[i] = IndexSet.infinite() if acc is None else acc
    return IndexFamily(bmap.target.name, out), verdict


def multiply_families(f1: IndexFamily, f2: IndexFamily) -> IndexFamily:
    if f1.space != f2.space:
        raise PhgError("family product: mismatched spaces")
    return IndexFamily(f1.space, {f: f1.at(f).minkowski(f2.at(f)) for f in f1.sets})


# -- JSON round-tripping ------------------------------------------------------


def index_set_to_json(s: IndexSet):
    if s.is_infinite:
        return "infinite"
    return [[g.numerator, g.denominator, p] for g, p in s.generators]


def index_set_from_json(v) -> IndexSet:
    if v == "infinite":
        return IndexSet.infinite()
    if not isinstance(v, list):
        raise PhgError(f"bad index set payload: {v!r}")
    gens = []
    for item in v:
        if not (isinstance(item, list) and len(item) == 3):
            raise PhgError(f"bad index set generator: {item!r}")
        num, den, p = item
        gens.append((Frac(num, den), int(p)))
    return IndexSet(tuple(gens))


def family_to_json(fam: IndexFamily) -> dict:
    return {
        "schema": "index-family/1",
        "space": fam.space,
        "family": {f: index_set_to_json(s) for f, s in sorted(fam.sets.items())},
    }


def family_from_json(d: Mapping) -> IndexFamily:
    if d.get("schema", "index-family/1") != "index-family/1":
        raise PhgError(f"unsupported index-family schema {d.get('schema')!r}")
    return IndexFamily(d["space"], {f: index_set_from_json(v) for f, v in d["family"].items()})


# -- the composition-order ledger ---------------------------------------------


@dataclass(frozen=True)
class LedgerStep:
    face: str
    exponent: Fraction
    description: str


@dataclass(frozen=True)
class CompositionLedger:
    steps: tuple[LedgerStep, ...]
    result: KernelOrder
    note: str

    def table(self) -> str:
        lines = [f"{'step':<42} {'face':>8} {'exponent':>9}"]
        for s in self.steps:
            lines.append(f"{s.description:<42} {s.face:>8} {str(s.exponent):>9}")
        lines.append(f"result: {self.result}")
        return "\n".join(lines)


def triple_density_weight(cat: Catalog | None = None) -> DensityWeight:
    """Weight of the composition integrand's volume factor relative to a
    b-density on the triple space: the lift of t' t'' / (x x' x'')."""
    cat = cat or build_catalog()
    row = lift_monomial(cat.map("beta_Tr"), {
        "t'": Frac(1), "t''": Frac(1),
        "x": Frac(-1), "x'": Frac(-1), "x''": Frac(-1),
    })
    return DensityWeight("HM3_phi", row)


def intermediate_density_weight(cat: Catalog | None = None, tag: str = "C") -> DensityWeight:
    """Weight of the target-side volume factor relative to a b-density on
    the intermediate heat space: the plain lift of t / (x x')."""
    cat = cat or build_catalog()
    tgt = cat.space(f"heat_target_{tag}")
    row: dict[str, Fraction] = {}
    for gen, sgn in (("t", 1), ("x", -1), ("x'", -1)):
        for f, e in tgt.named_row(gen).items():
            row[f] = row.get(f, Frac(0)) + sgn * e
    return DensityWeight(tgt.name, row)


def kernel_family_on_target(order: KernelOrder, tag: str, cat: Catalog | None = None,
                            assume_temporal_infinite: bool = True) -> IndexFamily:
    """Index family of a heat-calculus kernel lifted to the intermediate
    space copy used by one of the projections."""
    cat = cat or build_catalog()
    tgt = cat.space(f"heat_target_{tag}")
    sets = {f: IndexSet.infinite() for f in tgt.face_labels()}
    sets["11^Sc"] = IndexSet.smooth(order.a - 3)
    if not assume_temporal_infinite and order.ell is not None:
        sets["tf"] = IndexSet.smooth(order.ell)
    return IndexFamily(tgt.name, sets)


def composition_ledger(a_order: KernelOrder, b_order: KernelOrder,
                       cat: Catalog | None = None) -> CompositionLedger:
    """Run the composition bookkeeping through the triple space.

    Pull both kernel families back, multiply, attach the density weight,
    push forward along the central projection, and divide out the target
    density.  The second factor must vanish to infinite order in time; a
    finite first temporal order is reduced to the infinite-order case, which
    is recorded in the note.
    """
    if b_order.ell is not None:
        raise PhgError(
            "composition ledger requires the second factor to have infinite temporal order"
        )
    if a_order.m != b_order.m:
        raise PhgError("composition ledger: mismatched ambient dimensions")
    cat = cat or build_catalog()

    fam_a = pullback_family(cat.map("Pi_L"), kernel_family_on_target(a_order, "L", cat))
    fam_b = pullback_family(cat.map("Pi_R"), kernel_family_on_target(b_order, "R", cat))
    product = multiply_families(fam_a, fam_b)
    lead_o = product.at("O").leading()
    if lead_o is None:
        raise PhgError("composition ledger: product unexpectedly infinite at the triple diagonal")
    steps = [LedgerStep("O", lead_o, "kernel product on the triple space")]

    density = triple_density_weight(cat)
    lead_density = lead_o + density.at("O")
    steps.append(LedgerStep("O", lead_density, "after the b-density volume factor"))

    pushed, verdict = pushforward_family(cat.map("Pi_C"), product, density)
    if not verdict.ok:
        raise PhgError(f"composition ledger: {verdict}")
    lead_push = pushed.at("11^Sc").leading()
    steps.append(LedgerStep("11^Sc", lead_push, "after pushforward to the double space"))

    nu2 = intermediate_density_weight(cat, "C")
    lead_kernel = lead_push - nu2.at("11^Sc")
    steps.append(LedgerStep("11^Sc", lead_kernel, "after dividing out the target density"))

    for face in ("10", "01", "11", "tf"):
        if not pushed.at(face).is_infinite:
            raise PhgError(f"composition ledger: pushforward not infinite-order at {face}")

    result = KernelOrder(a=lead_kernel + 3, ell=None, m=a_order.m)
    note = ""
    if a_order.ell is not None:
        note = (
            "first factor has finite temporal order; its time face is treated as "
            "infinite order, which the second factor's infinite-order time lift justifies"
        )
    return CompositionLedger(tuple(steps), result, note)
