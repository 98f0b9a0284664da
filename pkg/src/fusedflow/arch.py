"""Architecture description: buffer hierarchy plus compute units.

Levels are ordered top-down; the first level is the off-chip backing store
(normally unbounded). Energy per action is supplied directly per level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass


class ArchError(Exception):
    pass


@dataclass(frozen=True)
class Level:
    name: str
    bandwidth: int            # words per cycle
    read_energy: float        # pJ per word
    write_energy: float       # pJ per word
    capacity: int | None = None   # words; None = unbounded
    fanout: int = 1
    hop_energy: float = 0.0   # pJ per word-hop on this level's NoC

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ArchError(f"level {self.name}: bandwidth must be positive")
        if self.capacity is not None and self.capacity <= 0:
            raise ArchError(f"level {self.name}: capacity must be positive")
        if self.fanout < 1:
            raise ArchError(f"level {self.name}: fanout must be >= 1")


@dataclass(frozen=True)
class Compute:
    units: int
    ops_per_cycle_per_unit: int = 1
    op_energy: float = 0.0
    pipeline_stages_supported: int = 1

    def __post_init__(self):
        if self.units < 1 or self.ops_per_cycle_per_unit < 1:
            raise ArchError("compute needs at least one unit and op per cycle")


@dataclass(frozen=True)
class Architecture:
    levels: tuple[Level, ...]
    compute: Compute

    def __post_init__(self):
        if not self.levels:
            raise ArchError("architecture needs at least one buffer level")
        names = [l.name for l in self.levels]
        if len(set(names)) != len(names):
            raise ArchError("level names must be unique")

    @property
    def top(self) -> Level:
        return self.levels[0]

    @property
    def innermost(self) -> Level:
        return self.levels[-1]

    def level(self, name: str) -> Level:
        for l in self.levels:
            if l.name == name:
                return l
        raise ArchError(f"unknown level {name}")

    def has_level(self, name: str) -> bool:
        return any(l.name == name for l in self.levels)

    def is_top(self, name: str) -> bool:
        return name == self.levels[0].name


def parse_architecture_dict(doc: dict) -> Architecture:
    if not isinstance(doc, dict) or "levels" not in doc or "compute" not in doc:
        raise ArchError("architecture file needs 'levels' and 'compute'")
    levels = []
    for i, raw in enumerate(doc["levels"]):
        try:
            levels.append(Level(
                name=raw["name"],
                bandwidth=int(raw["bandwidth"]),
                read_energy=float(raw["read_energy"]),
                write_energy=float(raw["write_energy"]),
                capacity=None if raw.get("capacity") is None
                else int(raw["capacity"]),
                fanout=int(raw.get("fanout", 1)),
                hop_energy=float(raw.get("hop_energy", 0.0)),
            ))
        except KeyError as exc:
            raise ArchError(f"levels[{i}]: missing field {exc}") from exc
    c = doc["compute"]
    try:
        compute = Compute(
            units=int(c["units"]),
            ops_per_cycle_per_unit=int(c.get("ops_per_cycle_per_unit", 1)),
            op_energy=float(c.get("op_energy", 0.0)),
            pipeline_stages_supported=int(c.get("pipeline_stages_supported", 1)),
        )
    except KeyError as exc:
        raise ArchError(f"compute: missing field {exc}") from exc
    return Architecture(tuple(levels), compute)


def parse_architecture(text: str) -> Architecture:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArchError(f"syntax error at line {exc.lineno}: {exc.msg}") from exc
    return parse_architecture_dict(doc)


def serialize_architecture(a: Architecture) -> str:
    doc = {
        "levels": [{
            "name": l.name, "bandwidth": l.bandwidth,
            "read_energy": l.read_energy, "write_energy": l.write_energy,
            "capacity": l.capacity, "fanout": l.fanout,
            "hop_energy": l.hop_energy,
        } for l in a.levels],
        "compute": {
            "units": a.compute.units,
            "ops_per_cycle_per_unit": a.compute.ops_per_cycle_per_unit,
            "op_energy": a.compute.op_energy,
            "pipeline_stages_supported": a.compute.pipeline_stages_supported,
        },
    }
    return json.dumps(doc, indent=2)
