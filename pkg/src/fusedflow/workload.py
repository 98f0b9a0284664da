"""Fusion-set workloads: chained extended Einsums and their data relations.

A fusion set is an ordered chain of Einsums linked by intermediate tensors.
Index expressions are affine with at most two terms, which covers plain
indexing (p), strided windows (2p+r) and sliding windows (p+r).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .geometry import AffineExpr, AffineRelation, Region, image


class WorkloadError(Exception):
    pass


class TensorRole(Enum):
    EXTERNAL_INPUT = "external_input"
    FILTER = "filter"
    INTERMEDIATE = "intermediate"
    EXTERNAL_OUTPUT = "external_output"


class ReuseClass(Enum):
    """How tiles of a tensor relate when one rank is partitioned."""

    FULL = "full"    # rank absent: every tile is the whole tensor
    CONV = "conv"    # rank in a multi-term expression: sliding windows
    NONE = "none"    # rank appears alone: disjoint tiles


@dataclass(frozen=True)
class TensorProjection:
    """How an Einsum indexes one tensor: one expression per data axis.

    `bounds[i]` optionally names a declared rank whose shape bounds axis i
    (needed only for multi-term expressions, e.g. H bounding p+r).
    """

    tensor: str
    exprs: tuple[AffineExpr, ...]
    bounds: tuple[str | None, ...] = ()

    def __post_init__(self):
        if not self.bounds:
            object.__setattr__(self, "bounds", (None,) * len(self.exprs))
        if len(self.bounds) != len(self.exprs):
            raise WorkloadError(f"{self.tensor}: one bound slot per axis required")


@dataclass(frozen=True)
class Einsum:
    name: str
    output: TensorProjection
    inputs: tuple[TensorProjection, ...]
    rank_shapes: dict[str, int]

    def __post_init__(self):
        seen = set()
        for e in self.output.exprs:
            if not e.is_single():
                raise WorkloadError(
                    f"{self.name}: output indexing must be plain single ranks")
            r = e.terms[0][1]
            if r in seen:
                raise WorkloadError(f"{self.name}: output rank {r} repeated")
            seen.add(r)
        for rank, shape in self.rank_shapes.items():
            if shape <= 0:
                raise WorkloadError(f"{self.name}: rank {rank} has shape {shape}")
        for rank in self.index_ranks:
            if rank not in self.rank_shapes:
                raise WorkloadError(f"{self.name}: rank {rank} has no shape")

    @property
    def index_ranks(self) -> tuple[str, ...]:
        """Ranks the operation space iterates over, in canonical order."""
        order: list[str] = []
        for proj in (self.output, *self.inputs):
            for e in proj.exprs:
                for _, r in e.terms:
                    if r not in order:
                        order.append(r)
        return tuple(order)

    @property
    def rank_order(self) -> tuple[str, ...]:
        return self.index_ranks

    @property
    def output_ranks(self) -> tuple[str, ...]:
        return tuple(e.terms[0][1] for e in self.output.exprs)

    @property
    def output_axes(self) -> tuple[str, ...]:
        return self.output_ranks

    @property
    def reduction_ranks(self) -> tuple[str, ...]:
        out = set(self.output_ranks)
        return tuple(r for r in self.index_ranks if r not in out)

    @property
    def tensor_names(self) -> tuple[str, ...]:
        return (self.output.tensor,) + tuple(p.tensor for p in self.inputs)

    def projection_of(self, tensor: str) -> TensorProjection:
        for proj in (self.output, *self.inputs):
            if proj.tensor == tensor:
                return proj
        raise WorkloadError(f"{self.name}: unknown tensor {tensor}")

    def expr_range(self, expr: AffineExpr) -> tuple[int, int]:
        """Min and max value of an expression over in-range indices."""
        lo = hi = expr.const
        for c, r in expr.terms:
            n = self.rank_shapes[r] - 1
            lo += min(0, c * n)
            hi += max(0, c * n)
        return lo, hi


def operation_space(einsum: Einsum) -> Region:
    """Full box over all index ranks; count = product of rank shapes."""
    return Region.from_extents(
        [(r, einsum.rank_shapes[r]) for r in einsum.rank_order])


def classify_reuse(einsum: Einsum, rank: str) -> dict[str, ReuseClass]:
    """Reuse pattern of each tensor's tiles when `rank` is partitioned."""
    if rank not in einsum.rank_shapes:
        raise WorkloadError(f"{einsum.name}: unknown rank {rank}")
    out = {}
    for proj in (einsum.output, *einsum.inputs):
        cls = ReuseClass.FULL
        for e in proj.exprs:
            if rank in e.rank_names:
                cls = ReuseClass.CONV if len(e.terms) > 1 else ReuseClass.NONE
                break
        out[proj.tensor] = cls
    return out


@dataclass(frozen=True)
class FusionSet:
    """An ordered chain of Einsums plus derived tensor metadata."""

    einsums: tuple[Einsum, ...]
    tensor_roles: dict[str, TensorRole] = field(default_factory=dict)
    tensor_axes: dict[str, tuple[str, ...]] = field(default_factory=dict)
    tensor_extents: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.einsums:
            raise WorkloadError("fusion set needs at least one Einsum")
        if not self.tensor_roles:
            roles, axes, extents = _derive_tensor_info(self.einsums)
            object.__setattr__(self, "tensor_roles", roles)
            object.__setattr__(self, "tensor_axes", axes)
            object.__setattr__(self, "tensor_extents", extents)
        _validate_chain(self)

    @property
    def last(self) -> Einsum:
        return self.einsums[-1]

    def einsum(self, name: str) -> Einsum:
        for e in self.einsums:
            if e.name == name:
                return e
        raise WorkloadError(f"unknown Einsum {name}")

    def layer_index(self, name: str) -> int:
        for i, e in enumerate(self.einsums):
            if e.name == name:
                return i
        raise WorkloadError(f"unknown Einsum {name}")

    def producer_of(self, tensor: str) -> Einsum | None:
        for e in self.einsums:
            if e.output.tensor == tensor:
                return e
        return None

    def consumers_of(self, tensor: str) -> list[Einsum]:
        return [e for e in self.einsums
                if any(p.tensor == tensor for p in e.inputs)]

    def tensors(self) -> list[str]:
        seen: list[str] = []
        for e in self.einsums:
            for t in e.tensor_names:
                if t not in seen:
                    seen.append(t)
        return seen

    def tensor_size(self, tensor: str) -> int:
        n = 1
        for e in self.tensor_extents[tensor]:
            n *= e
        return n

    def data_relation(self, einsum: Einsum | str, tensor: str) -> AffineRelation:
        """Operation points -> the data point of `tensor` they access."""
        e = self.einsum(einsum) if isinstance(einsum, str) else einsum
        proj = e.projection_of(tensor)
        return AffineRelation(e.rank_order, self.tensor_axes[tensor], proj.exprs)

    def accessed_region(self, einsum: Einsum | str, tensor: str) -> Region:
        e = self.einsum(einsum) if isinstance(einsum, str) else einsum
        return image(self.data_relation(e, tensor), operation_space(e))


def data_relation(einsum: Einsum, tensor: str) -> AffineRelation:
    """Standalone variant with axes named locally to the Einsum."""
    proj = einsum.projection_of(tensor)
    axes = _local_axes(proj)
    return AffineRelation(einsum.rank_order, axes, proj.exprs)


def relevance_map(fs: FusionSet) -> dict[str, frozenset[str]]:
    """For each tensor, the last Einsum's ranks its data tiles vary along.

    Partitioning an irrelevant rank yields identical tiles every iteration,
    so such coordinates must not evict retained data. Variation propagates
    structurally down the chain: a producer's operations vary only along
    output ranks whose tensor axis the consumers slice.
    """
    out: dict[str, set[str]] = {t: set() for t in fs.tensors()}
    last = fs.einsums[-1]
    for rho in last.rank_shapes:
        varying_axes: dict[str, set[int]] = {}
        varying_ranks: dict[str, set[str]] = {last.name: {rho}}
        for e in reversed(fs.einsums):
            if e is not last:
                mine = varying_axes.get(e.output.tensor, set())
                varying_ranks[e.name] = {
                    x.terms[0][1] for a, x in enumerate(e.output.exprs)
                    if a in mine}
            v = varying_ranks[e.name]
            if not v:
                continue
            for proj in (e.output, *e.inputs):
                for a, x in enumerate(proj.exprs):
                    if any(r in v for r in x.rank_names):
                        varying_axes.setdefault(proj.tensor, set()).add(a)
                        out[proj.tensor].add(rho)
    return {t: frozenset(v) for t, v in out.items()}


def _local_axes(proj: TensorProjection) -> tuple[str, ...]:
    axes = []
    for i, (e, bound) in enumerate(zip(proj.exprs, proj.bounds)):
        if bound is not None:
            axes.append(bound)
        elif len(e.terms) == 1 and e.terms[0][0] == 1 and e.const == 0:
            axes.append(e.terms[0][1])
        else:
            axes.append(f"{proj.tensor}@{i}")
    return tuple(axes)


def _derive_tensor_info(einsums):
    producers: dict[str, Einsum] = {}
    for e in einsums:
        if e.output.tensor in producers:
            raise WorkloadError(
                f"tensor {e.output.tensor} produced by more than one Einsum")
        producers[e.output.tensor] = e

    roles: dict[str, TensorRole] = {}
    axes: dict[str, tuple[str, ...]] = {}
    extents: dict[str, tuple[int, ...]] = {}

    for idx, e in enumerate(einsums):
        for proj in (e.output, *e.inputs):
            t = proj.tensor
            if t in axes and len(axes[t]) != len(proj.exprs):
                raise WorkloadError(
                    f"tensor {t} used with {len(proj.exprs)} axes in {e.name}, "
                    f"{len(axes[t])} elsewhere")
            if t in producers:
                prod = producers[t]
                axes.setdefault(t, _local_axes(prod.output))
                extents.setdefault(t, tuple(
                    prod.rank_shapes[r] for r in prod.output_ranks))
            else:
                axes.setdefault(t, _local_axes(proj))
                ext = []
                for a, (expr, bound) in enumerate(zip(proj.exprs, proj.bounds)):
                    lo, hi = e.expr_range(expr)
                    if lo < 0:
                        raise WorkloadError(
                            f"{e.name}: index of {t} axis {a} can reach {lo}")
                    declared = e.rank_shapes[bound] if bound else hi + 1
                    ext.append(declared)
                prev = extents.get(t)
                extents[t] = tuple(max(a, b) for a, b in zip(prev, ext)) \
                    if prev else tuple(ext)

    for t, prod in producers.items():
        consumed = any(any(p.tensor == t for p in e.inputs) for e in einsums)
        roles[t] = TensorRole.INTERMEDIATE if consumed else TensorRole.EXTERNAL_OUTPUT
    first_external = None
    for proj in einsums[0].inputs:
        if proj.tensor not in producers:
            first_external = proj.tensor
            break
    for e in einsums:
        for proj in e.inputs:
            t = proj.tensor
            if t not in producers and t not in roles:
                roles[t] = (TensorRole.EXTERNAL_INPUT if t == first_external
                            else TensorRole.FILTER)
    return roles, axes, extents


def _validate_chain(fs: FusionSet):
    names = set()
    for e in fs.einsums:
        if e.name in names:
            raise WorkloadError(f"duplicate Einsum name {e.name}")
        names.add(e.name)

    shapes: dict[str, int] = {}
    for e in fs.einsums:
        for r, s in e.rank_shapes.items():
            if shapes.setdefault(r, s) != s:
                raise WorkloadError(
                    f"rank {r} has shape {s} in {e.name} but {shapes[r]} elsewhere")

    last_out = fs.einsums[-1].output.tensor
    if fs.tensor_roles[last_out] is not TensorRole.EXTERNAL_OUTPUT:
        raise WorkloadError(f"last output {last_out} is consumed by an earlier layer")

    for idx, e in enumerate(fs.einsums):
        out = e.output.tensor
        if idx < len(fs.einsums) - 1:
            if fs.tensor_roles[out] is not TensorRole.INTERMEDIATE:
                raise WorkloadError(f"dangling intermediate tensor {out}: "
                                    f"produced by {e.name} but never consumed")
            later = [fs.layer_index(c.name) for c in fs.consumers_of(out)]
            if any(j <= idx for j in later):
                raise WorkloadError(
                    f"tensor {out} consumed before its producer {e.name}")
        if idx > 0:
            feeds = any(fs.tensor_roles.get(p.tensor) is TensorRole.INTERMEDIATE
                        for p in e.inputs)
            if not feeds:
                raise WorkloadError(
                    f"{e.name} consumes no intermediate tensor; chain is broken")

    # Halo-style bound checks for backed tensors, exact coverage for
    # intermediates (a consumer must read exactly what its producer makes).
    for e in fs.einsums:
        for proj in e.inputs:
            t = proj.tensor
            for a, expr in enumerate(proj.exprs):
                lo, hi = e.expr_range(expr)
                if lo < 0:
                    raise WorkloadError(
                        f"{e.name}: index of {t} axis {a} can reach {lo}")
                if hi >= fs.tensor_extents[t][a]:
                    axis = fs.tensor_axes[t][a]
                    raise WorkloadError(
                        f"shape inconsistency on rank {axis} of {t}: {e.name} "
                        f"reaches index {hi} but the extent is "
                        f"{fs.tensor_extents[t][a]}")
    for t, role in fs.tensor_roles.items():
        if role is not TensorRole.INTERMEDIATE:
            continue
        from .geometry import diff as r_diff, set_equal, union as r_union
        produced = Region.from_extents(
            list(zip(fs.tensor_axes[t], fs.tensor_extents[t])))
        accessed = [fs.accessed_region(c, t) for c in fs.consumers_of(t)]
        covered = accessed[0]
        for r in accessed[1:]:
            covered = r_union(covered, r)
        if not set_equal(covered, produced):
            prod = fs.producer_of(t)
            gap = r_diff(produced, covered)
            missing = fs.tensor_axes[t][0]
            if not gap.is_empty():
                box = gap.boxes[0]
                for k, axis in enumerate(fs.tensor_axes[t]):
                    if len(box[k]) < fs.tensor_extents[t][k]:
                        missing = axis
                        break
            raise WorkloadError(
                f"shape inconsistency on rank {missing} of {t}: consumers of "
                f"{prod.name}'s output do not cover what it produces")


# ---------------------------------------------------------------------------
# File format


def _parse_expr(raw, where: str) -> AffineExpr:
    if isinstance(raw, str):
        return AffineExpr.var(raw)
    if not isinstance(raw, list) or not raw or not isinstance(raw[-1], int):
        raise WorkloadError(
            f"{where}: expression must be a rank name or [[coeff, rank]..., const]")
    terms = []
    for item in raw[:-1]:
        if (not isinstance(item, list) or len(item) != 2
                or not isinstance(item[0], int) or not isinstance(item[1], str)):
            raise WorkloadError(f"{where}: bad term {item!r}")
        terms.append((item[0], item[1]))
    try:
        return AffineExpr(tuple(terms), raw[-1])
    except Exception as exc:
        raise WorkloadError(f"{where}: {exc}") from exc


def _parse_projection(raw, where: str) -> tuple[str, tuple[AffineExpr, ...]]:
    if not isinstance(raw, dict) or "tensor" not in raw or "indices" not in raw:
        raise WorkloadError(f"{where}: projection needs 'tensor' and 'indices'")
    exprs = tuple(_parse_expr(x, f"{where}.{raw['tensor']}")
                  for x in raw["indices"])
    return raw["tensor"], exprs


def _pair_bounds(einsum_raw, output, inputs, shapes, where):
    """Match declared-but-unindexed ranks to multi-term input axes, in order."""
    indexed = set()
    for _, exprs in (output, *inputs):
        for e in exprs:
            indexed.update(e.rank_names)
    extra = [r for r in shapes if r not in indexed]
    slots = []
    for t, exprs in inputs:
        for a, e in enumerate(exprs):
            if len(e.terms) > 1:
                slots.append((t, a))
    if len(extra) > len(slots):
        raise WorkloadError(
            f"{where}: rank(s) {extra[len(slots):]} declared but never used")
    pairing: dict[tuple[str, int], str] = dict(zip(slots, extra))
    return pairing


def parse_workload_dict(doc: dict) -> FusionSet:
    if not isinstance(doc, dict) or "einsums" not in doc:
        raise WorkloadError("workload file must be an object with 'einsums'")
    einsums = []
    for i, raw in enumerate(doc["einsums"]):
        where = f"einsums[{i}]"
        name = raw.get("name")
        if not name:
            raise WorkloadError(f"{where}: missing name")
        out_t, out_e = _parse_projection(raw.get("output"), where)
        ins = [_parse_projection(x, where) for x in raw.get("inputs", [])]
        shapes = raw.get("rank_shapes")
        if not isinstance(shapes, dict):
            raise WorkloadError(f"{where}: missing rank_shapes")
        shapes = {str(k): int(v) for k, v in shapes.items()}
        pairing = _pair_bounds(raw, (out_t, out_e), ins, shapes, where)
        inputs = tuple(
            TensorProjection(t, exprs,
                             tuple(pairing.get((t, a)) for a in range(len(exprs))))
            for t, exprs in ins)
        try:
            einsums.append(Einsum(name, TensorProjection(out_t, out_e), inputs,
                                  shapes))
        except WorkloadError:
            raise
        except Exception as exc:
            raise WorkloadError(f"{where}: {exc}") from exc
    return FusionSet(tuple(einsums))


def parse_workload(text: str) -> FusionSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WorkloadError(
            f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_workload_dict(doc)


def _expr_to_raw(e: AffineExpr):
    if e.is_single():
        return e.terms[0][1]
    return [[c, r] for c, r in e.terms] + [e.const]


def serialize_workload(fs: FusionSet) -> str:
    doc = {"einsums": []}
    for e in fs.einsums:
        doc["einsums"].append({
            "name": e.name,
            "output": {"tensor": e.output.tensor,
                       "indices": [_expr_to_raw(x) for x in e.output.exprs]},
            "inputs": [{"tensor": p.tensor,
                        "indices": [_expr_to_raw(x) for x in p.exprs]}
                       for p in e.inputs],
            "rank_shapes": dict(e.rank_shapes),
        })
    return json.dumps(doc, indent=2)
