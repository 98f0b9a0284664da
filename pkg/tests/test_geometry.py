"""Geometry engine tests: frozen examples plus brute-force sweeps."""

import random

import pytest

from fusedflow import geometry as g
from fusedflow.geometry import (
    AffineExpr, AffineRelation, Region, StridedInterval as SI,
)
from _reference import image_points, pair_count_points, points_of


def box_region(**extents):
    return Region.from_extents(extents)


# ---------------------------------------------------------------------------
# Strided intervals


def test_interval_basics():
    iv = SI(0, 6, 2)
    assert len(iv) == 4
    assert list(iv.points()) == [0, 2, 4, 6]
    assert 4 in iv and 3 not in iv and 8 not in iv
    with pytest.raises(g.GeometryError):
        SI(3, 1)
    with pytest.raises(g.GeometryError):
        SI(0, 5, 2)


def test_interval_intersect_examples():
    assert g.interval_intersect(SI(0, 4), SI(3, 7)) == SI(3, 4)
    assert g.interval_intersect(SI(0, 10, 2), SI(1, 9, 2)) is None
    assert g.interval_intersect(SI(0, 12, 3), SI(0, 12, 4)) == SI(0, 12, 12)
    assert g.interval_intersect(SI(2, 14, 4), SI(0, 20, 2)) == SI(2, 14, 4)


def test_interval_diff_examples():
    assert g.interval_diff(SI(0, 4), SI(0, 2)) == [SI(3, 4)]
    assert g.interval_diff(SI(0, 9), SI(3, 5)) == [SI(0, 2), SI(6, 9)]
    # Removing every third element leaves two interleaved progressions.
    pieces = g.interval_diff(SI(0, 10), SI(0, 9, 3))
    got = sorted(x for p in pieces for x in p.points())
    assert got == [1, 2, 4, 5, 7, 8, 10]


def test_interval_sweep_against_sets():
    rng = random.Random(7)
    for _ in range(300):
        a = _rand_interval(rng)
        b = _rand_interval(rng)
        sa, sb = set(a.points()), set(b.points())
        c = g.interval_intersect(a, b)
        assert (set(c.points()) if c else set()) == sa & sb
        pieces = g.interval_diff(a, b)
        union = set()
        for p in pieces:
            pts = set(p.points())
            assert not (union & pts), "diff pieces overlap"
            union |= pts
        assert union == sa - sb
        sums = g.interval_sum(a, b)
        assert {x for p in sums for x in p.points()} == {x + y for x in sa for y in sb}


def _rand_interval(rng):
    lo = rng.randrange(-4, 5)
    stride = rng.choice([1, 1, 1, 2, 3])
    n = rng.randrange(1, 7)
    return SI(lo, lo + stride * (n - 1), stride if n > 1 else 1)


def _rand_region(rng, ranks, max_boxes=3):
    boxes = [tuple(_rand_interval(rng) for _ in ranks)
             for _ in range(rng.randrange(0, max_boxes + 1))]
    return g.canonicalize(tuple(ranks), boxes)


# ---------------------------------------------------------------------------
# Region operations


def test_region_count_examples():
    r = Region.from_intervals(("c", "h"), (SI(0, 2), SI(0, 4)))
    assert r.count() == 15
    assert Region.empty(("c", "h")).count() == 0
    two = g.canonicalize(("x",), ((SI(0, 5),), (SI(10, 13),)))
    assert two.count() == 10


def test_set_op_examples():
    a = Region.from_intervals(("h",), (SI(0, 4),))
    b = Region.from_intervals(("h",), (SI(0, 2),))
    c = Region.from_intervals(("h",), (SI(3, 7),))
    assert points_of(g.diff(a, b)) == {(3,), (4,)}
    assert points_of(g.intersect(a, c)) == {(3,), (4,)}
    assert g.union(a, Region.empty(("h",))) == a
    with pytest.raises(g.RankMismatch):
        g.union(a, Region.empty(("x",)))


def test_enumerate_points():
    r = Region.from_intervals(("h",), (SI(0, 6, 2),))
    assert g.enumerate_points(r) == [(0,), (2,), (4,), (6,)]
    r2 = box_region(p=2, q=2)
    assert g.enumerate_points(r2) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert g.enumerate_points(Region.empty(("p",))) == []
    with pytest.raises(g.GeometryError):
        g.enumerate_points(r2, limit=3)


def test_canonical_disjoint_and_idempotent():
    rng = random.Random(11)
    for _ in range(200):
        ranks = ("a", "b")
        boxes = [tuple(_rand_interval(rng) for _ in ranks) for _ in range(3)]
        r = g.canonicalize(ranks, boxes)
        # Disjointness: total count equals the union of point sets.
        assert r.count() == len(points_of(r))
        assert points_of(r) == set().union(
            *(points_of(Region(ranks, (b,))) for b in boxes)) if boxes else True
        again = g.canonicalize(ranks, r.boxes)
        assert again == r


def test_set_ops_sweep_against_sets():
    rng = random.Random(3)
    for _ in range(250):
        ranks = ("a", "b") if rng.random() < 0.7 else ("a",)
        x = _rand_region(rng, ranks)
        y = _rand_region(rng, ranks)
        px, py = points_of(x), points_of(y)
        assert points_of(g.union(x, y)) == px | py
        assert points_of(g.intersect(x, y)) == px & py
        assert points_of(g.diff(x, y)) == px - py
        assert g.union(x, y).count() == x.count() + y.count() - g.intersect(x, y).count()


# ---------------------------------------------------------------------------
# Images


def conv_relation():
    return AffineRelation(
        domain=("m", "p", "c", "r"),
        codomain=("c", "h"),
        exprs=(AffineExpr.var("c"),
               AffineExpr(((1, "p"), (1, "r")))),
    )


def test_image_conv_window():
    r = box_region(m=4, p=3, c=3, r=3)
    img = g.image(conv_relation(), r)
    assert img == Region.from_intervals(("c", "h"), (SI(0, 2), SI(0, 4)))
    assert img.count() == 15


def test_image_empty_and_strided():
    rel = AffineRelation(("p",), ("h",), (AffineExpr(((2, "p"),)),))
    assert g.image(rel, Region.empty(("p",))).is_empty()
    img = g.image(rel, box_region(p=4))
    assert img == Region.from_intervals(("h",), (SI(0, 6, 2),))


def test_image_shared_rank_is_exact():
    # (p, p+r): output axes correlate through p; must not over-approximate.
    rel = AffineRelation(("p", "r"), ("a", "b"),
                         (AffineExpr.var("p"), AffineExpr(((1, "p"), (1, "r")))))
    r = box_region(p=4, r=3)
    img = g.image(rel, r)
    assert points_of(img) == image_points(("p", "r"), rel.exprs, points_of(r))
    assert img.count() == 12


def test_image_monotone_and_sweep():
    rng = random.Random(23)
    ranks = ("x", "y", "z")
    for _ in range(200):
        region = _rand_region(rng, ranks)
        exprs = tuple(_rand_expr(rng, ranks) for _ in range(rng.randrange(1, 3)))
        rel = AffineRelation(ranks, tuple(f"o{i}" for i in range(len(exprs))), exprs)
        img = g.image(rel, region)
        assert points_of(img) == image_points(ranks, exprs, points_of(region))
        sub = g.intersect(region, _rand_region(rng, ranks))
        sub_img = g.image(rel, sub)
        assert points_of(sub_img) <= points_of(img)


def _rand_expr(rng, ranks):
    n = rng.randrange(0, 3)
    chosen = rng.sample(ranks, n)
    terms = tuple((rng.choice([-2, -1, 1, 2, 3]), r) for r in chosen)
    return AffineExpr(terms, rng.randrange(-2, 3))


# ---------------------------------------------------------------------------
# Distinct (key, word) pair counting


def test_pair_count_matches_sets():
    rng = random.Random(41)
    ranks = ("x", "y", "z")
    for _ in range(300):
        region = _rand_region(rng, ranks)
        n_keys = rng.randrange(0, 4)
        key_ranks = rng.sample(ranks, n_keys)
        exprs = tuple(_rand_expr(rng, ranks) for _ in range(rng.randrange(0, 3)))
        got = g.pair_count(region, key_ranks, exprs)
        want = pair_count_points(region, key_ranks, exprs)
        assert got == want


def test_pair_count_identity_consistency():
    # All ranks as keys: pairs are just the points themselves.
    r = box_region(m=4, p=3, c=3)
    assert g.pair_count(r, ("m", "p", "c"), ()) == r.count()
    # No keys, word = projection: pairs are the image.
    rel = conv_relation()
    r4 = box_region(m=4, p=3, c=3, r=3)
    assert g.pair_count(r4, (), rel.exprs) == g.image(rel, r4).count()
