"""Exact combinatorics of manifolds with corners: blowup programs, boundary
faces, defining-function lifts, and b-map / b-fibration certificates.

A space is recorded as its list of boundary faces together with the ordered
blowup program that produced it.  Everything reduces to integer/rational
exponent bookkeeping: for each face we store the order of vanishing of every
(smooth) generator's pullback under the full blowdown.  Internally all
exponents are kept in the *smooth* normalization, where every defining
function and every generator is a weight-1 smooth coordinate (a temporal
variable t of weight 2 is handled through its smooth square root).  Named
exponents, as printed in lift tables, are rescaled by the weight ratio at
the interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

__all__ = [
    "Variable",
    "BlowupCenter",
    "BoundaryFace",
    "CornerSpace",
    "BMap",
    "Certificate",
    "ProjectionSquare",
    "CornerGeometryError",
    "base_space",
    "blow_up",
    "compose_bmaps",
    "identity_bmap",
    "lift_monomial",
    "lift_sum",
    "certify_b_fibration",
    "solve_projection_lift",
]

Frac = Fraction
Monomial = Mapping[str, Fraction]


class CornerGeometryError(ValueError):
    """Raised on malformed spaces, centers or inconsistent lift systems."""


@dataclass(frozen=True)
class Variable:
    """A generator coordinate of a model corner.

    weight 1: spatial or tau-type temporal (already smooth);
    weight 2: t-type temporal, whose smooth representative is sqrt(t).
    Interior coordinates (boundary=False) carry no boundary face but may
    appear in diagonal identifications.
    """

    name: str
    kind: str = "spatial"  # "spatial" | "temporal"
    weight: int = 1
    boundary: bool = True

    def __post_init__(self):
        if self.kind not in ("spatial", "temporal"):
            raise CornerGeometryError(f"variable {self.name}: bad kind {self.kind!r}")
        if self.weight not in (1, 2):
            raise CornerGeometryError(f"variable {self.name}: weight must be 1 or 2")
        if self.kind == "spatial" and self.weight != 1:
            raise CornerGeometryError(f"spatial variable {self.name} must have weight 1")


@dataclass(frozen=True)
class BlowupCenter:
    """A p-submanifold to blow up, described syntactically.

    ``vanishing`` lists generator names and/or labels of existing faces the
    center lies in; ``identifications`` are diagonal relations (pairs of
    equated variables, angular where the pair also vanishes).
    """

    id: str
    vanishing: tuple[str, ...]
    identifications: tuple[tuple[str, str], ...] = ()
    label: str = ""
    face_weight: int = 1
    boundary_center: bool = False

    @property
    def face_label(self) -> str:
        return self.label or self.id


@dataclass(frozen=True)
class BoundaryFace:
    label: str
    origin: str  # generator name or blowup-center id
    weight: int = 1


@dataclass(frozen=True)
class _CenterInfo:
    """Resolved containment data of a center at the time of its blowup.

    ``faces_in`` holds blowup-face containments only (declared plus those
    acquired by swallowing); generator faces are represented by ``gens_in``.
    """

    faces_in: frozenset[str]
    gens_in: frozenset[str]
    ids_closure: frozenset[frozenset[str]]


def _ids_classes(pairs: Iterable[tuple[str, str]]) -> list[set[str]]:
    classes: list[set[str]] = []
    for a, b in pairs:
        hits = [c for c in classes if a in c or b in c]
        merged = {a, b}
        for c in hits:
            merged |= c
            classes.remove(c)
        classes.append(merged)
    return classes


def _vanishing_closure(gens: set[str], classes: Sequence[set[str]]) -> set[str]:
    closed = set(gens)
    changed = True
    while changed:
        changed = False
        for c in classes:
            if closed & c and not c <= closed:
                closed |= c
                changed = True
    return closed


class CornerSpace:
    """Immutable manifold-with-corners model: generators, faces, program.

    ``_rows`` holds, per generator, the smooth order of vanishing of its
    pullback under the full blowdown at every face.
    """

    def __init__(self, name, generators, faces, program, rows, center_info):
        self.name: str = name
        self.generators: tuple[Variable, ...] = tuple(generators)
        self.faces: tuple[BoundaryFace, ...] = tuple(faces)
        self.program: tuple[BlowupCenter, ...] = tuple(program)
        self._rows: dict[str, dict[str, Fraction]] = rows
        self._center_info: dict[str, _CenterInfo] = center_info
        labels = [f.label for f in self.faces]
        if len(set(labels)) != len(labels):
            raise CornerGeometryError(f"{name}: duplicate face labels")
        names = [g.name for g in self.generators]
        if len(set(names)) != len(names):
            raise CornerGeometryError(f"{name}: duplicate generator names")

    # -- lookups ------------------------------------------------------------

    def generator(self, name: str) -> Variable:
        for g in self.generators:
            if g.name == name:
                return g
        raise CornerGeometryError(f"{self.name}: unknown generator {name!r}")

    def face(self, label: str) -> BoundaryFace:
        for f in self.faces:
            if f.label == label:
                return f
        raise CornerGeometryError(f"{self.name}: unknown face {label!r}")

    def face_labels(self) -> tuple[str, ...]:
        return tuple(f.label for f in self.faces)

    def has_face(self, label: str) -> bool:
        return any(f.label == label for f in self.faces)

    def generator_face(self, gen: str) -> str | None:
        for f in self.faces:
            if f.origin == gen and self.generator(gen).boundary:
                return f.label
        return None

    def smooth_row(self, gen: str) -> dict[str, Fraction]:
        """Smooth vanishing orders of the lifted generator, per face."""
        if gen not in self._rows:
            raise CornerGeometryError(f"{self.name}: unknown generator {gen!r}")
        return dict(self._rows[gen])

    def named_row(self, gen: str) -> dict[str, Fraction]:
        """Named exponents of the lift of the named generator monomial."""
        g = self.generator(gen)
        out = {}
        for f in self.faces:
            e = self._rows[gen].get(f.label, Frac(0))
            if e:
                out[f.label] = e * g.weight / f.weight
        return out

    def contained_faces(self, center_id: str) -> frozenset[str]:
        """All faces (blowup and generator) the recorded center lies in."""
        info = self._center_info[center_id]
        out = set(info.faces_in)
        for g in info.gens_in:
            lbl = self.generator_face(g)
            if lbl is not None:
                out.add(lbl)
        return frozenset(out)

    def center_contains(self, center_id: str, what: str) -> bool:
        """Effective containment of a recorded center in a face or in {v=0}."""
        info = self._center_info[center_id]
        if what in self.contained_faces(center_id):
            return True
        return what in info.gens_in

    def center_in_zero_set(self, center_id: str, gen: str) -> bool:
        """Relation-closure containment of a recorded center in {gen = 0}:
        the generator vanishes on the center directly or through one of the
        faces the center lies in."""
        info = self._center_info[center_id]
        if gen in info.gens_in:
            return True
        row = self._rows[gen]
        return any(row.get(f, Frac(0)) > 0 for f in self.contained_faces(center_id))

    def diff_row(self, pair: tuple[str, str]) -> dict[str, Fraction]:
        """Smooth vanishing orders of the lifted difference u - v, per face.

        Generator faces never carry a difference; a blowup face carries the
        order accumulated under its center plus one extra unit whenever the
        center itself forces the identification.
        """
        u, v = pair
        if self.generator(u).kind != self.generator(v).kind:
            raise CornerGeometryError(f"diff {pair}: mixed kinds")
        row: dict[str, Fraction] = {}
        for c in self.program:
            info = self._center_info[c.id]
            acc = sum(
                (row[f] for f in self.contained_faces(c.id) if f in row),
                Frac(0),
            )
            forced = any(u in cls and v in cls for cls in info.ids_closure)
            forced = forced or (u in info.gens_in and v in info.gens_in)
            ord_new = acc + (1 if forced else 0)
            if ord_new:
                row[c.face_label] = ord_new
        return row

    def __repr__(self):
        return f"CornerSpace({self.name}: faces={[f.label for f in self.faces]})"


def base_space(
    name: str,
    generators: Sequence[Variable],
    face_labels: Mapping[str, str] | None = None,
) -> CornerSpace:
    """A product corner: one boundary face per boundary generator."""
    face_labels = dict(face_labels or {})
    faces = []
    rows: dict[str, dict[str, Fraction]] = {}
    for g in generators:
        rows[g.name] = {}
        if g.boundary:
            label = face_labels.get(g.name, g.name)
            faces.append(BoundaryFace(label=label, origin=g.name, weight=g.weight))
            rows[g.name][label] = Frac(1)
    return CornerSpace(name, generators, faces, (), rows, {})


def extend_with_generator(space: CornerSpace, var: Variable, face_label: str | None = None) -> CornerSpace:
    """Product with a new coordinate factor (e.g. attaching a time axis)."""
    if any(g.name == var.name for g in space.generators):
        raise CornerGeometryError(f"{space.name}: generator {var.name!r} already present")
    faces = list(space.faces)
    rows = {g: dict(r) for g, r in space._rows.items()}
    rows[var.name] = {}
    if var.boundary:
        label = face_label or var.name
        faces.append(BoundaryFace(label=label, origin=var.name, weight=var.weight))
        rows[var.name][label] = Frac(1)
    return CornerSpace(
        f"{space.name}*[0,inf)_{var.name}" if var.boundary else f"{space.name}*R_{var.name}",
        tuple(space.generators) + (var,),
        faces,
        space.program,
        rows,
        dict(space._center_info),
    )


def _resolve_center(space: CornerSpace, center: BlowupCenter) -> _CenterInfo:
    gen_names = {g.name for g in space.generators}
    face_labels = set(space.face_labels())
    classes = _ids_classes(center.identifications)

    for a, b in center.identifications:
        for n in (a, b):
            if n not in gen_names:
                raise CornerGeometryError(f"center {center.id}: unknown symbol {n!r} in identification")
        ga, gb = space.generator(a), space.generator(b)
        if ga.kind != gb.kind or ga.weight != gb.weight:
            raise CornerGeometryError(f"center {center.id}: identification {a}={b} mixes kinds")

    if not center.vanishing and not center.identifications:
        raise CornerGeometryError(f"center {center.id}: empty description")

    v_gens: set[str] = set()
    v_faces: set[str] = set()
    for s in center.vanishing:
        if s in gen_names:
            if not space.generator(s).boundary:
                raise CornerGeometryError(f"center {center.id}: interior variable {s!r} cannot vanish")
            v_gens.add(s)
        elif s in face_labels:
            v_faces.add(s)
        else:
            raise CornerGeometryError(f"center {center.id}: unknown symbol {s!r}")

    gens_in = _vanishing_closure(v_gens, classes)
    faces_in = set(v_faces)

    # Swallowing: a center whose constraints imply an earlier center is carried
    # into that blowup's front face; the front-face fibre spans the angular
    # directions of the earlier center, so containment in the earlier center's
    # generator faces is lost.
    for prior in space.program:
        pinfo = space._center_info[prior.id]
        if not pinfo.gens_in:
            continue
        if prior.face_label in faces_in:
            continue
        ids_implied = all(
            len(cls) <= 1 or any(set(cls) <= mine for mine in (set(c) for c in classes))
            for cls in pinfo.ids_closure
        )
        if pinfo.gens_in <= gens_in and pinfo.faces_in <= faces_in and ids_implied:
            faces_in.add(prior.face_label)
            gens_in -= pinfo.gens_in

    ids_closure = frozenset(frozenset(c) for c in classes)
    return _CenterInfo(frozenset(faces_in), frozenset(gens_in), ids_closure)


def blow_up(space: CornerSpace, center: BlowupCenter) -> tuple[CornerSpace, "BMap"]:
    """Blow up ``center`` in ``space``; returns the new space and the blowdown.

    The blowdown's exponent matrix is the identity on old faces; the new
    face's column carries weight(i)/weight(new) exactly at the faces
    containing the center.
    """
    info = _resolve_center(space, center)
    if space.has_face(center.face_label):
        raise CornerGeometryError(f"center {center.id}: face label {center.face_label!r} already used")

    contained = set(info.faces_in)
    for g in info.gens_in:
        lbl = space.generator_face(g)
        if lbl is not None:
            contained.add(lbl)

    if center.boundary_center and not contained:
        raise CornerGeometryError(
            f"center {center.id}: degenerate blowup, contained in no boundary face"
        )

    new_face = BoundaryFace(label=center.face_label, origin=center.id, weight=center.face_weight)
    faces = tuple(space.faces) + (new_face,)

    rows = {g: dict(r) for g, r in space._rows.items()}
    for g in rows:
        ord_new = sum(
            (rows[g].get(f, Frac(0)) for f in contained),
            Frac(0),
        )
        if ord_new:
            rows[g][new_face.label] = ord_new

    center_info = dict(space._center_info)
    center_info[center.id] = info

    new_space = CornerSpace(
        f"[{space.name};{center.id}]",
        space.generators,
        faces,
        tuple(space.program) + (center,),
        rows,
        center_info,
    )

    alpha: dict[str, dict[str, Fraction]] = {}
    for f in space.faces:
        col = {f.label: Frac(1)}
        if f.label in contained:
            col[new_face.label] = Frac(f.weight, new_face.weight)
        alpha[f.label] = col
    bmap = BMap(source=new_space, target=space, alpha=alpha)
    return new_space, bmap


def centers_disjoint(space: CornerSpace, c1: BlowupCenter, c2: BlowupCenter) -> bool:
    """Syntactic disjointness of two lifted centers: their joint vanishing
    locus lies in an already blown-up center contained in neither alone, so
    the earlier front face separates them."""

    def raw(c: BlowupCenter) -> set[str]:
        gens = {s for s in c.vanishing if any(g.name == s for g in space.generators)}
        return _vanishing_closure(gens, _ids_classes(c.identifications))

    g1, g2 = raw(c1), raw(c2)
    joint = g1 | g2
    for prior in space.program:
        pinfo = space._center_info[prior.id]
        if not pinfo.gens_in:
            continue
        if pinfo.gens_in <= joint and not pinfo.gens_in <= g1 and not pinfo.gens_in <= g2:
            return True
    return False


class BMap:
    """A map between corner spaces, as a named-exponent matrix over defining
    functions: pullback of the target function ``i`` is the monomial
    ``prod_j rho_j ** alpha[i][j]`` times a positive smooth factor.
    """

    def __init__(
        self,
        source: CornerSpace,
        target: CornerSpace,
        alpha: Mapping[str, Mapping[str, Fraction]],
        smooth_flags: Mapping[str, bool] | None = None,
        b_submersion: bool = False,
        name: str = "",
    ):
        self.source = source
        self.target = target
        self.name = name or f"{source.name}->{target.name}"
        self.alpha: dict[str, dict[str, Fraction]] = {
            i: {j: Frac(e) for j, e in row.items() if Frac(e) != 0}
            for i, row in alpha.items()
        }
        for i in target.face_labels():
            self.alpha.setdefault(i, {})
        self.smooth_flags: dict[str, bool] = {
            i: True for i in target.face_labels()
        }
        if smooth_flags:
            self.smooth_flags.update(smooth_flags)
        self.b_submersion = b_submersion
        for i, row in self.alpha.items():
            if not self.target.has_face(i):
                raise CornerGeometryError(f"{self.name}: unknown target face {i!r}")
            for j, e in row.items():
                if not self.source.has_face(j):
                    raise CornerGeometryError(f"{self.name}: unknown source face {j!r}")
                if e < 0:
                    raise CornerGeometryError(f"{self.name}: negative exponent at ({i},{j})")

    def exponent(self, target_face: str, source_face: str) -> Fraction:
        return self.alpha.get(target_face, {}).get(source_face, Frac(0))

    def __repr__(self):
        return f"BMap({self.name})"


def identity_bmap(space: CornerSpace) -> BMap:
    return BMap(space, space, {f: {f: Frac(1)} for f in space.face_labels()},
                b_submersion=True, name=f"id_{space.name}")


def compose_bmaps(outer: BMap, inner: BMap) -> BMap:
    """outer o inner, for inner: X -> Y and outer: Y -> Z."""
    if inner.target is not outer.source and inner.target.name != outer.source.name:
        raise CornerGeometryError(
            f"compose: inner.target={inner.target.name} != outer.source={outer.source.name}"
        )
    alpha: dict[str, dict[str, Fraction]] = {}
    for k, row_k in outer.alpha.items():
        out_row: dict[str, Fraction] = {}
        for i, e in row_k.items():
            for j, e2 in inner.alpha.get(i, {}).items():
                out_row[j] = out_row.get(j, Frac(0)) + e * e2
        alpha[k] = {j: v for j, v in out_row.items() if v}
    flags = {
        k: outer.smooth_flags.get(k, True)
        and all(inner.smooth_flags.get(i, True) for i in outer.alpha.get(k, {}))
        for k in outer.target.face_labels()
    }
    return BMap(inner.source, outer.target, alpha, smooth_flags=flags,
                b_submersion=outer.b_submersion and inner.b_submersion,
                name=f"{outer.name}o{inner.name}")


def _named_generator_row(space: CornerSpace, gen: str) -> dict[str, Fraction]:
    return space.named_row(gen)


def lift_monomial(bmap: BMap, monomial: Monomial) -> dict[str, Fraction]:
    """Named exponents, over source faces, of the pullback of a monomial in
    target defining functions and/or target generators.  Exact rationals."""
    gen_names = {g.name for g in bmap.target.generators}
    expanded: dict[str, Fraction] = {}
    for name, e in monomial.items():
        e = Frac(e)
        if bmap.target.has_face(name):
            expanded[name] = expanded.get(name, Frac(0)) + e
        elif name in gen_names:
            for f, c in _named_generator_row(bmap.target, name).items():
                expanded[f] = expanded.get(f, Frac(0)) + e * c
        else:
            raise CornerGeometryError(f"lift_monomial: unknown name {name!r} on {bmap.target.name}")
    out: dict[str, Fraction] = {}
    for i, e in expanded.items():
        for j, a in bmap.alpha.get(i, {}).items():
            out[j] = out.get(j, Frac(0)) + e * a
    return {j: v for j, v in out.items() if v}


def lift_sum(bmap: BMap, monomials: Sequence[Monomial]) -> dict[str, Fraction]:
    """Lift of a sum of monomials: componentwise minimum of the lifts (valid
    for sums of nonnegative monomials, where no cancellation can occur)."""
    if not monomials:
        raise CornerGeometryError("lift_sum: empty sum")
    rows = [lift_monomial(bmap, m) for m in monomials]
    faces = set().union(*[set(r) for r in rows])
    out = {}
    for f in faces:
        v = min(r.get(f, Frac(0)) for r in rows)
        if v:
            out[f] = v
    return out


@dataclass(frozen=True)
class Certificate:
    kind: str  # "b-map" | "b-submersion assumed" | "b-fibration"
    ok: bool
    witness_columns: tuple[str, ...] = ()
    temporal_overlaps: tuple[str, ...] = ()

    def __str__(self):
        w = f" witnesses={list(self.witness_columns)}" if self.witness_columns else ""
        t = f" temporal_overlaps={list(self.temporal_overlaps)}" if self.temporal_overlaps else ""
        return f"{self.kind} ({'ok' if self.ok else 'fails'}){w}{t}"


def _face_is_temporal(space: CornerSpace, label: str) -> bool:
    face = space.face(label)
    if face.weight == 2:
        return True
    for g in space.generators:
        if g.name == face.origin:
            return g.kind == "temporal"
    return False


def certify_b_fibration(bmap: BMap) -> Certificate:
    """Syntactic certificate: the b-fibration verdict is the column condition
    on the exponent matrix (each source face feeds at most one spatial target
    face).  A column may additionally feed temporal target faces: along the
    time axis the catalog projections are Volterra-type maps whose columns
    legitimately touch the time face as well; those overlaps are recorded in
    the certificate rather than counted as failures.  b-submersion status is
    declared metadata, not computed.
    """
    for i, row in bmap.alpha.items():
        for j, e in row.items():
            if e < 0:
                return Certificate("b-map", ok=False, witness_columns=(j,))
    bad = []
    temporal = []
    for j in bmap.source.face_labels():
        hits = [i for i in bmap.alpha if bmap.alpha[i].get(j)]
        spatial_hits = [i for i in hits if not _face_is_temporal(bmap.target, i)]
        if len(spatial_hits) > 1:
            bad.append(j)
        elif len(hits) > len(spatial_hits) and spatial_hits:
            temporal.append(j)
    if bad:
        return Certificate("b-map", ok=True, witness_columns=tuple(sorted(bad)),
                           temporal_overlaps=tuple(sorted(temporal)))
    if not bmap.b_submersion:
        return Certificate("b-submersion assumed", ok=False,
                           temporal_overlaps=tuple(sorted(temporal)))
    return Certificate("b-fibration", ok=True, temporal_overlaps=tuple(sorted(temporal)))


@dataclass
class ProjectionSquare:
    """Commuting-square data for lifting a base projection to blowups.

    ``base_map`` sends each target generator to a sum of named monomials in
    source generators (a single monomial in the common case).
    ``adapted`` optionally overrides the boundary-monomial relation of a
    target generator, as a named monomial over target faces (used for the
    corner-compatible temporal normalization of the time axis).
    """

    source: CornerSpace
    target: CornerSpace
    base_map: Mapping[str, Sequence[Monomial]]
    adapted: Mapping[str, Monomial] = field(default_factory=dict)
    b_submersion: bool = True
    name: str = ""


def _source_smooth_row_of_named_sum(space: CornerSpace, monomials: Sequence[Monomial]) -> dict[str, Fraction]:
    rows = []
    for m in monomials:
        row: dict[str, Fraction] = {}
        for g, e in m.items():
            var = space.generator(g)
            srow = space.smooth_row(g)
            for f, c in srow.items():
                row[f] = row.get(f, Frac(0)) + Frac(e) * var.weight * c
        rows.append(row)
    faces = set().union(*[set(r) for r in rows]) if rows else set()
    return {f: min(r.get(f, Frac(0)) for r in rows) for f in faces}


def _solve_exact(mat: list[list[Fraction]], rhs: list[list[Fraction]], cols: list[str]):
    """Gaussian elimination over Q; rhs holds several right-hand sides.
    Returns solution rows per column name; raises on inconsistency or
    underdetermination, naming the offending face."""
    m = [row[:] for row in mat]
    r = [row[:] for row in rhs]
    n_eq, n_col = len(m), len(cols)
    n_rhs = len(r[0]) if r else 0
    piv_of_col: list[int | None] = [None] * n_col
    row_i = 0
    for col in range(n_col):
        piv = next((k for k in range(row_i, n_eq) if m[k][col] != 0), None)
        if piv is None:
            continue
        m[row_i], m[piv] = m[piv], m[row_i]
        r[row_i], r[piv] = r[piv], r[row_i]
        inv = Frac(1) / m[row_i][col]
        m[row_i] = [v * inv for v in m[row_i]]
        r[row_i] = [v * inv for v in r[row_i]]
        for k in range(n_eq):
            if k != row_i and m[k][col] != 0:
                c = m[k][col]
                m[k] = [a - c * b for a, b in zip(m[k], m[row_i])]
                r[k] = [a - c * b for a, b in zip(r[k], r[row_i])]
        piv_of_col[col] = row_i
        row_i += 1
    for col, piv in enumerate(piv_of_col):
        if piv is None:
            raise CornerGeometryError(f"projection lift underdetermined at face {cols[col]!r}")
    for k in range(row_i, n_eq):
        if any(v != 0 for v in r[k]):
            raise CornerGeometryError("projection lift inconsistent: no rational solution")
    sol = []
    for col in range(n_col):
        sol.append(r[piv_of_col[col]][:n_rhs])
    return sol


def solve_projection_lift(square: ProjectionSquare) -> BMap:
    """Solve the commuting square for the lifted projection's exponent matrix.

    The unknown matrix is pinned down by requiring commutation on every
    boundary-monomial relation of the target: its generators (or their
    adapted corner normalizations) and the diagonal differences of its
    blowup identifications.  Exact over Q; errors name the offending face.
    """
    src, tgt = square.source, square.target
    src_faces = list(src.face_labels())
    tgt_faces = list(tgt.face_labels())

    equations: list[tuple[dict[str, Fraction], dict[str, Fraction], str]] = []
    gen_rows: dict[str, tuple[dict[str, Fraction], dict[str, Fraction]]] = {}

    for g in tgt.generators:
        if g.name not in square.base_map:
            if g.boundary:
                raise CornerGeometryError(f"projection {square.name}: base_map missing {g.name!r}")
            continue
        if not g.boundary:
            continue
        src_row = _source_smooth_row_of_named_sum(src, square.base_map[g.name])
        src_row = {f: c / g.weight for f, c in src_row.items()}
        if g.name in square.adapted:
            named = square.adapted[g.name]
            tgt_row = {}
            for f, c in named.items():
                tgt_row[f] = Frac(c) * tgt.face(f).weight / g.weight
        else:
            tgt_row = tgt.smooth_row(g.name)
        gen_rows[g.name] = (tgt_row, src_row)
        equations.append((tgt_row, src_row, g.name))

    def _single_gen(mon: Monomial, nm: str) -> str:
        items = [(k, e) for k, e in mon.items() if Frac(e) != 0]
        if len(items) != 1 or items[0][1] != 1:
            raise CornerGeometryError(f"projection {square.name}: base image of {nm!r} is not a coordinate")
        return items[0][0]

    diff_rows: dict[tuple[str, str], tuple[dict[str, Fraction], dict[str, Fraction]]] = {}
    pairs = sorted({tuple(sorted(p)) for c in tgt.program for p in c.identifications})
    for u, v in pairs:
        tgt_row = tgt.diff_row((u, v))
        mu = square.base_map.get(u)
        mv = square.base_map.get(v)
        if mu is None or mv is None or len(mu) != 1 or len(mv) != 1:
            raise CornerGeometryError(f"projection {square.name}: ids pair ({u},{v}) needs 1-monomial base images")
        su, sv = _single_gen(mu[0], u), _single_gen(mv[0], v)
        src_row = src.diff_row((su, sv))
        diff_rows[(u, v)] = (tgt_row, src_row)
        equations.append((tgt_row, src_row, f"{u}-{v}"))

    # One relation per blowup center of the target: the lifted center ideal is
    # principal, so its pullback order is the componentwise minimum over the
    # ideal's generator and diagonal parts.
    def _row_min(rows: Sequence[dict[str, Fraction]]) -> dict[str, Fraction]:
        faces = set().union(*[set(r) for r in rows])
        return {f: m for f in faces if (m := min(r.get(f, Frac(0)) for r in rows))}

    for c in tgt.program:
        parts = [gen_rows[s] for s in c.vanishing if s in gen_rows]
        parts += [diff_rows[p] for p in (tuple(sorted(q)) for q in c.identifications)
                  if p in diff_rows]
        if len(parts) >= 2:
            equations.append((
                _row_min([p[0] for p in parts]),
                _row_min([p[1] for p in parts]),
                f"ideal({c.id})",
            ))

    mat = [[eq[0].get(f, Frac(0)) for f in tgt_faces] for eq in equations]
    rhs = [[eq[1].get(f, Frac(0)) for f in src_faces] for eq in equations]
    sol = _solve_exact(mat, rhs, tgt_faces)

    alpha: dict[str, dict[str, Fraction]] = {}
    for i, tf in enumerate(tgt_faces):
        row = {}
        w_i = tgt.face(tf).weight
        for j, sf in enumerate(src_faces):
            v = sol[i][j]
            if v < 0:
                raise CornerGeometryError(
                    f"projection lift has negative exponent at target face {tf!r}, source face {sf!r}"
                )
            if v:
                row[sf] = v * w_i / src.face(sf).weight
        alpha[tf] = row
    return BMap(src, tgt, alpha, b_submersion=square.b_submersion,
                name=square.name or f"lift({src.name}->{tgt.name})")
