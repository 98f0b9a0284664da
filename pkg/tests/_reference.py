"""Explicit point-set reference implementations used to check the fast paths.

Everything here works on frozensets of integer tuples, deliberately sharing
no code with the strided-box algebra.
"""

from itertools import product

from fusedflow.geometry import AffineExpr, Region


def points_of(region: Region) -> frozenset:
    pts = set()
    for box in region.boxes:
        pts.update(product(*(range(iv.lo, iv.hi + 1, iv.stride) for iv in box)))
    return frozenset(pts)


def expr_value(expr: AffineExpr, env: dict) -> int:
    return sum(c * env[r] for c, r in expr.terms) + expr.const


def image_points(domain, exprs, pts) -> frozenset:
    out = set()
    for p in pts:
        env = dict(zip(domain, p))
        out.add(tuple(expr_value(e, env) for e in exprs))
    return frozenset(out)


def pair_count_points(region: Region, key_ranks, exprs) -> int:
    keys = [i for i, r in enumerate(region.ranks) if r in set(key_ranks)]
    pairs = set()
    for p in points_of(region):
        env = dict(zip(region.ranks, p))
        key = tuple(p[i] for i in keys)
        word = tuple(expr_value(e, env) for e in exprs)
        pairs.add((key, word))
    return len(pairs)
