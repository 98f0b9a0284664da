"""Builders for the standard fusion-set shapes used in studies and tests.

Spatial extents chain backwards: a convolution consuming an intermediate of
rows P_prev requires P + R - 1 == P_prev, so builders take the shapes of the
last layer and derive producers, mirroring how tile inference walks the chain.
"""

from __future__ import annotations

from .geometry import AffineExpr
from .workload import Einsum, FusionSet, TensorProjection, WorkloadError


def _var(r):
    return AffineExpr.var(r)


def _win(p, r, stride=1):
    return AffineExpr(((stride, p), (1, r)))


def conv2d(name: str, idx: int, fmap_in: str, fmap_out: str,
           c: int, m: int, p: int, q: int, r: int, s: int,
           stride: int = 1, declare_input_bounds: bool = False) -> Einsum:
    """Fmap_out[m,p,q] = Fmap_in[c, stride*p+r, stride*q+s] * Filter[m,c,r,s]."""
    i = str(idx)
    h = stride * (p - 1) + r
    w = stride * (q - 1) + s
    shapes = {f"M{i}": m, f"P{i}": p, f"Q{i}": q,
              f"C{i}": c, f"R{i}": r, f"S{i}": s}
    bounds = (None, None, None)
    if declare_input_bounds:
        shapes[f"H{i}"] = h
        shapes[f"W{i}"] = w
        bounds = (None, f"H{i}", f"W{i}")
    return Einsum(
        name=name,
        output=TensorProjection(fmap_out, (_var(f"M{i}"), _var(f"P{i}"),
                                           _var(f"Q{i}"))),
        inputs=(
            TensorProjection(fmap_in,
                             (_var(f"C{i}"),
                              _win(f"P{i}", f"R{i}", stride),
                              _win(f"Q{i}", f"S{i}", stride)),
                             bounds),
            TensorProjection(f"Filter{i}", (_var(f"M{i}"), _var(f"C{i}"),
                                            _var(f"R{i}"), _var(f"S{i}"))),
        ),
        rank_shapes=shapes,
    )


def conv1d(name: str, idx: int, fmap_in: str, fmap_out: str,
           c: int, m: int, p: int, r: int,
           stride: int = 1, declare_input_bounds: bool = False) -> Einsum:
    i = str(idx)
    shapes = {f"M{i}": m, f"P{i}": p, f"C{i}": c, f"R{i}": r}
    bounds = (None, None)
    if declare_input_bounds:
        shapes[f"H{i}"] = stride * (p - 1) + r
        bounds = (None, f"H{i}")
    return Einsum(
        name=name,
        output=TensorProjection(fmap_out, (_var(f"M{i}"), _var(f"P{i}"))),
        inputs=(
            TensorProjection(fmap_in, (_var(f"C{i}"),
                                       _win(f"P{i}", f"R{i}", stride)), bounds),
            TensorProjection(f"Filter{i}", (_var(f"M{i}"), _var(f"C{i}"),
                                            _var(f"R{i}"))),
        ),
        rank_shapes=shapes,
    )


def eq2_conv() -> FusionSet:
    """The running 1-D convolution example: M=4, P=6, C=3, H=8, R=3."""
    return FusionSet((conv1d("Conv1", 1, "Input", "Output",
                             c=3, m=4, p=6, r=3, declare_input_bounds=True),))


def conv_chain(depth: int, p: int, q: int, channels: list[int],
               r: int = 3, s: int = 3) -> FusionSet:
    """`depth` chained 2-D convolutions ending at a p x q output.

    channels[k] is the channel count of Fmap(k+1); len == depth + 1.
    """
    if len(channels) != depth + 1:
        raise WorkloadError("need depth+1 channel counts")
    ps, qs = [p], [q]
    for _ in range(depth - 1):
        ps.insert(0, ps[0] + r - 1)
        qs.insert(0, qs[0] + s - 1)
    einsums = []
    for k in range(depth):
        einsums.append(conv2d(
            f"Conv{k + 1}", k + 1, f"Fmap{k + 1}", f"Fmap{k + 2}",
            c=channels[k], m=channels[k + 1], p=ps[k], q=qs[k], r=r, s=s,
            declare_input_bounds=(k == 0)))
    return FusionSet(tuple(einsums))


def conv_conv(p2: int, q2: int, c1: int, m1: int, m2: int,
              r: int = 3, s: int = 3) -> FusionSet:
    return conv_chain(2, p2, q2, [c1, m1, m2], r=r, s=s)


def pwise_dwise_pwise(p3: int, q3: int, c1: int, m1: int, m3: int,
                      r2: int = 3, s2: int = 3) -> FusionSet:
    """Pointwise, depthwise, pointwise; the depthwise shares its channel rank."""
    p2, q2 = p3, q3
    p1, q1 = p2 + r2 - 1, q2 + s2 - 1
    pw1 = Einsum(
        name="Pwise1",
        output=TensorProjection("Fmap2", (_var("M1"), _var("P1"), _var("Q1"))),
        inputs=(
            TensorProjection("Fmap1", (_var("C1"), _var("P1"), _var("Q1"))),
            TensorProjection("Filter1", (_var("M1"), _var("C1"))),
        ),
        rank_shapes={"M1": m1, "P1": p1, "Q1": q1, "C1": c1},
    )
    dw = Einsum(
        name="Dwise2",
        output=TensorProjection("Fmap3", (_var("M1"), _var("P2"), _var("Q2"))),
        inputs=(
            TensorProjection("Fmap2", (_var("M1"), _win("P2", "R2"),
                                       _win("Q2", "S2"))),
            TensorProjection("Filter2", (_var("M1"), _var("R2"), _var("S2"))),
        ),
        rank_shapes={"M1": m1, "P2": p2, "Q2": q2, "R2": r2, "S2": s2},
    )
    pw2 = Einsum(
        name="Pwise3",
        output=TensorProjection("Fmap4", (_var("M3"), _var("P3"), _var("Q3"))),
        inputs=(
            TensorProjection("Fmap3", (_var("C3"), _var("P3"), _var("Q3"))),
            TensorProjection("Filter3", (_var("M3"), _var("C3"))),
        ),
        rank_shapes={"M3": m3, "P3": p3, "Q3": q3, "C3": m1},
    )
    return FusionSet((pw1, dw, pw2))


def fc_fc(b: int, d1: int, m1: int, m2: int) -> FusionSet:
    """Two fully connected layers over a shared batch/token rank."""
    fc1 = Einsum(
        name="Fc1",
        output=TensorProjection("Fmap2", (_var("M1"), _var("B"))),
        inputs=(
            TensorProjection("Fmap1", (_var("D1"), _var("B"))),
            TensorProjection("Filter1", (_var("M1"), _var("D1"))),
        ),
        rank_shapes={"M1": m1, "B": b, "D1": d1},
    )
    fc2 = Einsum(
        name="Fc2",
        output=TensorProjection("Fmap3", (_var("M2"), _var("B"))),
        inputs=(
            TensorProjection("Fmap2", (_var("D2"), _var("B"))),
            TensorProjection("Filter2", (_var("M2"), _var("D2"))),
        ),
        rank_shapes={"M2": m2, "B": b, "D2": m1},
    )
    return FusionSet((fc1, fc2))


TEMPLATES = {
    "conv+conv": conv_conv,
    "pwise+dwise+pwise": pwise_dwise_pwise,
    "fc+fc": fc_fc,
}
