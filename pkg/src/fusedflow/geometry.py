"""Exact finite integer-set algebra over unions of strided-interval boxes.

Operation and data tiles are finite sets of integer points. We represent
them as unions of pairwise-disjoint boxes whose sides are strided intervals,
and implement set operations (union, intersection, difference), images under
small affine maps, and exact counting without ever enumerating points.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import gcd
from typing import Iterable, Iterator, Sequence, TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from .workload import Einsum


class GeometryError(Exception):
    pass


class RankMismatch(GeometryError):
    pass


# ---------------------------------------------------------------------------
# 1-D strided intervals


@dataclass(frozen=True, order=True)
class StridedInterval:
    """The set {lo, lo+stride, ..., hi}; lo <= hi and stride | (hi - lo)."""

    lo: int
    hi: int
    stride: int = 1

    def __post_init__(self):
        if self.lo > self.hi:
            raise GeometryError(f"empty interval {self.lo}..{self.hi}")
        if self.stride <= 0:
            raise GeometryError(f"stride must be positive, got {self.stride}")
        if (self.hi - self.lo) % self.stride != 0:
            raise GeometryError(
                f"stride {self.stride} does not divide span {self.lo}..{self.hi}")
        if self.lo == self.hi and self.stride != 1:
            object.__setattr__(self, "stride", 1)

    def __len__(self) -> int:
        return (self.hi - self.lo) // self.stride + 1

    def __contains__(self, x: int) -> bool:
        return self.lo <= x <= self.hi and (x - self.lo) % self.stride == 0

    def points(self) -> range:
        return range(self.lo, self.hi + 1, self.stride)

    def shifted(self, k: int) -> "StridedInterval":
        return StridedInterval(self.lo + k, self.hi + k, self.stride)

    def scaled(self, c: int) -> "StridedInterval":
        if c == 0:
            return StridedInterval(0, 0, 1)
        if c > 0:
            return StridedInterval(self.lo * c, self.hi * c, self.stride * c)
        return StridedInterval(self.hi * c, self.lo * c, self.stride * -c)


def interval_intersect(a: StridedInterval, b: StridedInterval) -> StridedInterval | None:
    """Exact intersection of two strided intervals (CRT on the offsets)."""
    d = gcd(a.stride, b.stride)
    if (b.lo - a.lo) % d != 0:
        return None
    step = a.stride // d * b.stride  # lcm
    # Solve x = a.lo (mod a.stride), x = b.lo (mod b.stride).
    # x = a.lo + a.stride * t with t = (b.lo - a.lo)/d * inv(a.stride/d) mod b.stride/d
    m = b.stride // d
    if m == 1:
        x0 = a.lo
    else:
        t = ((b.lo - a.lo) // d) * pow(a.stride // d, -1, m) % m
        x0 = a.lo + a.stride * t
    lo = max(a.lo, b.lo)
    if x0 < lo:
        x0 += (lo - x0 + step - 1) // step * step
    hi = min(a.hi, b.hi)
    if x0 > hi:
        return None
    hi -= (hi - x0) % step
    return StridedInterval(x0, hi, step)


def interval_diff(a: StridedInterval, b: StridedInterval) -> list[StridedInterval]:
    """a minus b, as disjoint strided intervals covering exactly a \\ b."""
    c = interval_intersect(a, b)
    if c is None:
        return [a]
    out = []
    if a.lo <= c.lo - a.stride:
        out.append(StridedInterval(a.lo, c.lo - a.stride, a.stride))
    if c.hi + a.stride <= a.hi:
        out.append(StridedInterval(c.hi + a.stride, a.hi, a.stride))
    # Elements of a strictly inside [c.lo, c.hi] that c skips over.
    m = c.stride // a.stride
    for j in range(1, m):
        lo = c.lo + j * a.stride
        if lo > min(c.hi, a.hi):
            break
        hi = min(c.hi, a.hi)
        hi -= (hi - lo) % c.stride
        out.append(StridedInterval(lo, hi, c.stride))
    return out


def interval_sum(a: StridedInterval, b: StridedInterval) -> list[StridedInterval]:
    """Exact sumset {x + y : x in a, y in b} as disjoint intervals."""
    if len(a) == 1:
        return [b.shifted(a.lo)]
    if len(b) == 1:
        return [a.shifted(b.lo)]
    if a.stride == b.stride:
        return [StridedInterval(a.lo + b.lo, a.hi + b.hi, a.stride)]
    # Shift copies of the longer progression by each element of the shorter;
    # overlaps are resolved by the region layer, so just emit all copies.
    if len(a) > len(b):
        a, b = b, a
    return [b.shifted(x) for x in a.points()]


# ---------------------------------------------------------------------------
# Boxes and regions

Box = tuple[StridedInterval, ...]


def _box_count(box: Box) -> int:
    n = 1
    for iv in box:
        n *= len(iv)
    return n


def _box_intersect(a: Box, b: Box) -> Box | None:
    out = []
    for x, y in zip(a, b):
        iv = interval_intersect(x, y)
        if iv is None:
            return None
        out.append(iv)
    return tuple(out)


def _box_diff(a: Box, b: Box) -> list[Box]:
    c = _box_intersect(a, b)
    if c is None:
        return [a]
    out = []
    for k in range(len(a)):
        for piece in interval_diff(a[k], c[k]):
            out.append(c[:k] + (piece,) + a[k + 1:])
    return out


def _try_merge(a: Box, b: Box, k: int) -> Box | None:
    """Merge two boxes identical except along rank k, if exactly adjoinable."""
    for j in range(len(a)):
        if j != k and a[j] != b[j]:
            return None
    x, y = a[k], b[k]
    if x.lo > y.lo:
        x, y = y, x
    if len(x) == 1 and len(y) == 1:
        return None if y.lo == x.lo else (
            a[:k] + (StridedInterval(x.lo, y.lo, y.lo - x.lo),) + a[k + 1:])
    if len(x) == 1:
        s = y.stride
    elif len(y) == 1:
        s = x.stride
    elif x.stride == y.stride:
        s = x.stride
    else:
        return None
    if (len(x) > 1 and x.stride != s) or (len(y) > 1 and y.stride != s):
        return None
    if y.lo != x.hi + s:
        return None
    return a[:k] + (StridedInterval(x.lo, y.hi, s),) + a[k + 1:]


@dataclass(frozen=True)
class Region:
    """A finite point set: disjoint strided boxes over an ordered rank tuple."""

    ranks: tuple[str, ...]
    boxes: tuple[Box, ...] = ()

    @staticmethod
    def from_extents(extents: dict[str, int] | Sequence[tuple[str, int]]) -> "Region":
        """Full box [0, n) along each rank, in the given order."""
        items = list(extents.items()) if isinstance(extents, dict) else list(extents)
        ranks = tuple(r for r, _ in items)
        for r, n in items:
            if n <= 0:
                raise GeometryError(f"extent of rank {r} must be positive")
        box = tuple(StridedInterval(0, n - 1) for _, n in items)
        return Region(ranks, (box,))

    @staticmethod
    def from_intervals(ranks: Sequence[str],
                       intervals: Sequence[StridedInterval]) -> "Region":
        return Region(tuple(ranks), (tuple(intervals),))

    @staticmethod
    def empty(ranks: Sequence[str]) -> "Region":
        return Region(tuple(ranks), ())

    def is_empty(self) -> bool:
        return not self.boxes

    def count(self) -> int:
        return sum(_box_count(b) for b in self.boxes)

    def __contains__(self, point: Sequence[int]) -> bool:
        return any(all(x in iv for x, iv in zip(point, box)) for box in self.boxes)

    def bounding_intervals(self) -> Box:
        if not self.boxes:
            raise GeometryError("empty region has no bounding box")
        out = []
        for k in range(len(self.ranks)):
            lo = min(b[k].lo for b in self.boxes)
            hi = max(b[k].hi for b in self.boxes)
            s = gcd(*(b[k].stride for b in self.boxes)) if len(self.boxes) > 1 \
                else self.boxes[0][k].stride
            span = hi - lo
            for b in self.boxes:
                s = gcd(s, b[k].lo - lo)
            s = gcd(s, span)
            out.append(StridedInterval(lo, hi, s if s > 0 else 1))
        return tuple(out)

    def dump(self) -> str:
        """Debug form: one box per line, rank=lo..hi:stride."""
        lines = []
        for box in self.boxes:
            lines.append(" ".join(f"{r}={iv.lo}..{iv.hi}:{iv.stride}"
                                  for r, iv in zip(self.ranks, box)))
        return "\n".join(lines)


def _check_ranks(a: Region, b: Region):
    if a.ranks != b.ranks:
        raise RankMismatch(f"rank tuples differ: {a.ranks} vs {b.ranks}")


def canonicalize(ranks: tuple[str, ...], boxes: Iterable[Box]) -> Region:
    """Disjointify, merge adjacent boxes greedily (last rank first), sort."""
    disjoint: list[Box] = []
    for box in boxes:
        pieces = [box]
        for existing in disjoint:
            nxt = []
            for p in pieces:
                nxt.extend(_box_diff(p, existing))
            pieces = nxt
            if not pieces:
                break
        disjoint.extend(pieces)
    changed = True
    while changed:
        changed = False
        for k in range(len(ranks) - 1, -1, -1):
            i = 0
            while i < len(disjoint):
                j = i + 1
                while j < len(disjoint):
                    merged = _try_merge(disjoint[i], disjoint[j], k)
                    if merged is not None:
                        disjoint[i] = merged
                        del disjoint[j]
                        changed = True
                    else:
                        j += 1
                i += 1
    return Region(ranks, tuple(sorted(disjoint)))


def union(a: Region, b: Region) -> Region:
    _check_ranks(a, b)
    return canonicalize(a.ranks, a.boxes + b.boxes)


def intersect(a: Region, b: Region) -> Region:
    _check_ranks(a, b)
    out = []
    for x in a.boxes:
        for y in b.boxes:
            c = _box_intersect(x, y)
            if c is not None:
                out.append(c)
    return canonicalize(a.ranks, out)


def diff(a: Region, b: Region) -> Region:
    _check_ranks(a, b)
    pieces = list(a.boxes)
    for y in b.boxes:
        nxt = []
        for p in pieces:
            nxt.extend(_box_diff(p, y))
        pieces = nxt
    return canonicalize(a.ranks, pieces)


def union_all(regions: Sequence[Region]) -> Region:
    if not regions:
        raise GeometryError("union_all of nothing")
    boxes = []
    for r in regions:
        _check_ranks(regions[0], r)
        boxes.extend(r.boxes)
    return canonicalize(regions[0].ranks, boxes)


def count(r: Region) -> int:
    return r.count()


def set_equal(a: Region, b: Region) -> bool:
    """Point-set equality; canonical forms of interleaved strided unions are
    not unique, so box-level equality is only sufficient, not necessary."""
    _check_ranks(a, b)
    if a.boxes == b.boxes:
        return True
    return diff(a, b).is_empty() and diff(b, a).is_empty()


def normalized(r: Region) -> Region:
    """Translate the region so every rank's minimum coordinate is zero.

    Images of our affine maps are translation-covariant, so normalized
    regions index shape classes: equal normal forms mean equal behavior.
    """
    if not r.boxes:
        return r
    mins = [min(b[k].lo for b in r.boxes) for k in range(len(r.ranks))]
    boxes = tuple(
        tuple(iv.shifted(-mins[k]) for k, iv in enumerate(box))
        for box in r.boxes)
    return Region(r.ranks, boxes)


def enumerate_points(r: Region, limit: int = 1_000_000) -> list[tuple[int, ...]]:
    """All points in lexicographic order; errors if the region is too big."""
    n = r.count()
    if n > limit:
        raise GeometryError(f"region has {n} points, over limit {limit}")
    pts: list[tuple[int, ...]] = []
    for box in r.boxes:
        pts.extend(product(*(iv.points() for iv in box)))
    pts.sort()
    return pts


# ---------------------------------------------------------------------------
# Affine expressions, relations, images


@dataclass(frozen=True)
class AffineExpr:
    """c1*i + c2*j + k with at most two terms and nonzero coefficients."""

    terms: tuple[tuple[int, str], ...]
    const: int = 0

    def __post_init__(self):
        if len(self.terms) > 2:
            raise GeometryError("affine expressions carry at most two terms")
        seen = set()
        for c, r in self.terms:
            if c == 0:
                raise GeometryError("zero coefficient in affine expression")
            if r in seen:
                raise GeometryError(f"rank {r} repeated in affine expression")
            seen.add(r)

    @staticmethod
    def var(rank: str) -> "AffineExpr":
        return AffineExpr(((1, rank),))

    @property
    def rank_names(self) -> tuple[str, ...]:
        return tuple(r for _, r in self.terms)

    def is_single(self) -> bool:
        return len(self.terms) == 1 and self.terms[0][0] == 1 and self.const == 0

    def evaluate(self, env: dict[str, int]) -> int:
        return sum(c * env[r] for c, r in self.terms) + self.const

    def drop_ranks(self, ranks: set[str]) -> "AffineExpr":
        return AffineExpr(tuple(t for t in self.terms if t[1] not in ranks),
                          self.const)

    def __str__(self) -> str:
        parts = []
        for c, r in self.terms:
            parts.append(r if c == 1 else f"{c}{r}")
        if self.const or not parts:
            parts.append(str(self.const))
        return "+".join(parts)


@dataclass(frozen=True)
class AffineRelation:
    """Maps points over domain ranks to points over codomain ranks."""

    domain: tuple[str, ...]
    codomain: tuple[str, ...]
    exprs: tuple[AffineExpr, ...]

    def __post_init__(self):
        if len(self.codomain) != len(self.exprs):
            raise GeometryError("one expression per codomain rank required")
        dom = set(self.domain)
        for e in self.exprs:
            for _, r in e.terms:
                if r not in dom:
                    raise RankMismatch(f"expression rank {r} not in domain")

    def apply(self, point: Sequence[int]) -> tuple[int, ...]:
        env = dict(zip(self.domain, point))
        return tuple(e.evaluate(env) for e in self.exprs)


def _expr_image_1d(expr: AffineExpr, env: dict[str, StridedInterval]
                   ) -> list[StridedInterval]:
    parts = [env[r].scaled(c) for c, r in expr.terms]
    if not parts:
        return [StridedInterval(expr.const, expr.const)]
    if len(parts) == 1:
        return [parts[0].shifted(expr.const)]
    return [s.shifted(expr.const) for s in interval_sum(parts[0], parts[1])]


def _image_box(exprs: Sequence[AffineExpr], domain: tuple[str, ...],
               box: Box) -> Iterator[Box]:
    env = dict(zip(domain, box))
    used: dict[str, list[int]] = {}
    for i, e in enumerate(exprs):
        for r in e.rank_names:
            used.setdefault(r, []).append(i)
    shared = [r for r, idxs in used.items() if len(idxs) > 1 and len(env[r]) > 1]
    if not shared:
        alternatives = [_expr_image_1d(e, env) for e in exprs]
        yield from product(*alternatives)
        return
    # A rank feeding several output axes correlates them; enumerate the
    # cheapest such rank and recurse on each slice (stays exact).
    r = min(shared, key=lambda r: len(env[r]))
    k = domain.index(r)
    for v in env[r].points():
        sliced = box[:k] + (StridedInterval(v, v),) + box[k + 1:]
        yield from _image_box(exprs, domain, sliced)


def image(rel: AffineRelation, r: Region) -> Region:
    """Exact image {rel(x) : x in r} in canonical form."""
    if r.ranks != rel.domain:
        raise RankMismatch(f"region ranks {r.ranks} != relation domain {rel.domain}")
    boxes = []
    for box in r.boxes:
        boxes.extend(_image_box(rel.exprs, rel.domain, box))
    return canonicalize(rel.codomain, boxes)


# ---------------------------------------------------------------------------
# Producer preimage


def producer_ops(needed: Region, producer: "Einsum") -> Region:
    """Operations of `producer` whose output lands in `needed`.

    The preimage of the (plain, single-index) output projection, extended to
    the full extent of the producer's reduction ranks.
    """
    out_ranks = [e.terms[0][1] for e in producer.output.exprs]
    if needed.ranks != producer.output_axes:
        raise RankMismatch(
            f"needed region over {needed.ranks}, expected {producer.output_axes}")
    op_ranks = producer.rank_order
    full = {r: producer.rank_shapes[r] for r in op_ranks}
    boxes = []
    for box in needed.boxes:
        by_rank = dict(zip(out_ranks, box))
        op_box = []
        for rk in op_ranks:
            if rk in by_rank:
                iv = by_rank[rk]
                if iv.lo < 0 or iv.hi >= full[rk]:
                    raise GeometryError(
                        f"needed data exceeds extent of rank {rk} "
                        f"(0..{full[rk] - 1})")
                op_box.append(iv)
            else:
                op_box.append(StridedInterval(0, full[rk] - 1))
        boxes.append(tuple(op_box))
    return canonicalize(tuple(op_ranks), boxes)


# ---------------------------------------------------------------------------
# Distinct-pair counting for delivery analysis

# Counts distinct (key, word) pairs where key is the identity projection of a
# point onto `key_ranks` and word is the point's image under `exprs`. Terms
# over key ranks are dropped first: for a fixed key they only translate the
# word, which is a bijection and cannot change the count.


def _project(box: Box, idxs: Sequence[int]) -> Box:
    return tuple(box[i] for i in idxs)


def _with_proj(box: Box, idxs: Sequence[int], proj: Box) -> Box:
    out = list(box)
    for i, iv in zip(idxs, proj):
        out[i] = iv
    return tuple(out)


def pair_count(r: Region, key_ranks: Sequence[str],
               exprs: Sequence[AffineExpr]) -> int:
    """|{(x|key_ranks, exprs(x)) : x in r}| computed without enumeration."""
    if r.is_empty():
        return 0
    key_set = set(key_ranks)
    idxs = [i for i, rk in enumerate(r.ranks) if rk in key_set]
    rest_idx = [i for i in range(len(r.ranks)) if i not in idxs]
    rest_ranks = tuple(r.ranks[i] for i in rest_idx)
    stripped = [e.drop_ranks(key_set) for e in exprs]
    word_ranks = tuple(f"w{i}" for i in range(len(stripped)))

    # Refine boxes into cells whose key-projections are equal or disjoint.
    cells: list[tuple[Box, list[Box]]] = []
    work = list(r.boxes)
    while work:
        b = work.pop()
        tb = _project(b, idxs)
        placed = False
        for ci, (cp, members) in enumerate(cells):
            ov = _box_intersect(tb, cp)
            if ov is None:
                continue
            if ov == cp:
                if ov == tb:
                    members.append(b)
                else:
                    members.append(_with_proj(b, idxs, ov))
                    for frag in _box_diff(tb, ov):
                        work.append(_with_proj(b, idxs, frag))
                placed = True
                break
            # Split the existing cell along the overlap.
            new_cells = [(ov, [_with_proj(m, idxs, ov) for m in members])]
            for frag in _box_diff(cp, ov):
                new_cells.append((frag, [_with_proj(m, idxs, frag)
                                         for m in members]))
            cells[ci:ci + 1] = new_cells
            work.append(b)
            placed = True
            break
        if not placed:
            cells.append((tb, [b]))

    total = 0
    for cp, members in cells:
        n_keys = _box_count(cp)
        word_boxes = []
        for m in members:
            sub = _project(m, rest_idx)
            word_boxes.extend(_image_box(stripped, rest_ranks, sub))
        words = canonicalize(word_ranks, word_boxes)
        total += n_keys * words.count()
    return total
