"""Block-chain cost model for in-camera pipelines.

A pipeline is a linear chain of blocks. A placement config picks which
optional blocks run, where each in-camera block executes, and the cut after
which data leaves the camera. Everything past the cut runs in the cloud and
costs the camera nothing; the camera pays compute energy for its blocks plus
``energy_per_bit`` for every bit sent across the cut.

Energy is an expectation: a block only runs on the fraction of frames that
upstream filters forward. Throughput is a worst-case guarantee: the slowest of
the in-camera blocks and the link, assuming every frame passes.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

CAMERA_CPU = "camera-cpu"
CAMERA_ACCEL = "camera-accel"
CLOUD = "cloud"
PLACEMENTS = (CAMERA_CPU, CAMERA_ACCEL, CLOUD)
CAMERA_PLACEMENTS = (CAMERA_CPU, CAMERA_ACCEL)

CORE = "core"
OPTIONAL = "optional"

CSV_HEADER = ["config_id", "included", "placements", "cut_index", "throughput_fps", "energy", "feasible"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Cost:
    energy: float
    latency: float


@dataclass(frozen=True)
class BlockSpec:
    id: str
    kind: str
    compute_cost: Mapping[str, Cost]
    output_bits: float
    pass_rate: float = 1.0

    def __post_init__(self):
        if self.kind not in (CORE, OPTIONAL):
            raise ConfigError(f"block {self.id!r}: kind must be 'core' or 'optional', got {self.kind!r}")
        if not 0.0 <= self.pass_rate <= 1.0:
            raise ConfigError(f"block {self.id!r}: pass_rate {self.pass_rate} outside [0, 1]")
        if self.output_bits < 0:
            raise ConfigError(f"block {self.id!r}: negative output_bits")
        costs = {}
        for where, c in self.compute_cost.items():
            if where not in PLACEMENTS:
                raise ConfigError(f"block {self.id!r}: unknown placement {where!r}")
            if not isinstance(c, Cost):
                c = Cost(*c)
            if not c.latency > 0:
                raise ConfigError(f"block {self.id!r}: latency on {where} must be > 0")
            costs[where] = c
        object.__setattr__(self, "compute_cost", costs)

    @property
    def optional(self) -> bool:
        return self.kind == OPTIONAL


@dataclass(frozen=True)
class LinkSpec:
    bandwidth_bits_per_s: float
    energy_per_bit: float

    def __post_init__(self):
        if not (self.bandwidth_bits_per_s > 0 and self.energy_per_bit > 0):
            raise ConfigError("link bandwidth and energy_per_bit must both be > 0")


@dataclass(frozen=True)
class PipelineGraph:
    blocks: tuple[BlockSpec, ...]
    source_bits: float
    link: LinkSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ConfigError("pipeline needs at least one block")
        ids = [b.id for b in self.blocks]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate block ids in {ids}")
        if self.source_bits < 0:
            raise ConfigError("negative source_bits")

    def index(self, block_id: str) -> int:
        for i, b in enumerate(self.blocks):
            if b.id == block_id:
                return i
        raise ConfigError(f"no block named {block_id!r}")


@dataclass(frozen=True)
class PlacementConfig:
    """``included``: optional blocks instantiated before the cut.
    ``placement``: camera placement for every in-camera block.
    ``cut_index``: number of leading chain positions kept in-camera.
    """

    included: frozenset[str]
    placement: Mapping[str, str]
    cut_index: int

    def __init__(self, included, placement, cut_index):
        object.__setattr__(self, "included", frozenset(included))
        object.__setattr__(self, "placement", dict(placement))
        object.__setattr__(self, "cut_index", int(cut_index))

    def __hash__(self):
        return hash((self.included, tuple(sorted(self.placement.items())), self.cut_index))

    def describe_included(self) -> str:
        return ";".join(sorted(self.included))

    def describe_placement(self, graph: PipelineGraph) -> str:
        return ";".join(f"{b.id}={self.placement[b.id]}" for b in graph.blocks if b.id in self.placement)


def in_camera_blocks(graph: PipelineGraph, cfg: PlacementConfig) -> list[BlockSpec]:
    return [
        b for b in graph.blocks[: cfg.cut_index] if not b.optional or b.id in cfg.included
    ]


def validate(graph: PipelineGraph, cfg: PlacementConfig) -> list[BlockSpec]:
    """Check ``cfg`` against ``graph``; returns the in-camera blocks in chain order."""
    n = len(graph.blocks)
    if not 0 <= cfg.cut_index <= n:
        raise ConfigError(f"cut_index {cfg.cut_index} outside [0, {n}]")
    ids = {b.id for b in graph.blocks}
    for bid in cfg.included:
        if bid not in ids:
            raise ConfigError(f"included block {bid!r} not in pipeline")
        i = graph.index(bid)
        if not graph.blocks[i].optional:
            raise ConfigError(f"block {bid!r} is core; only optional blocks go in 'included'")
        if i >= cfg.cut_index:
            raise ConfigError(f"optional block {bid!r} is past the cut and cannot be included")
    if cfg.cut_index > 0:
        last = graph.blocks[cfg.cut_index - 1]
        if last.optional and last.id not in cfg.included:
            raise ConfigError(f"block {last.id!r} right before the cut must be instantiated")
    blocks = in_camera_blocks(graph, cfg)
    wanted = {b.id for b in blocks}
    extra = set(cfg.placement) - wanted
    if extra:
        raise ConfigError(f"placement given for blocks not run in-camera: {sorted(extra)}")
    for b in blocks:
        where = cfg.placement.get(b.id)
        if where is None:
            raise ConfigError(f"block {b.id!r} has no placement")
        if where not in CAMERA_PLACEMENTS:
            raise ConfigError(f"block {b.id!r}: in-camera placement must be one of {CAMERA_PLACEMENTS}")
        if where not in b.compute_cost:
            raise ConfigError(f"block {b.id!r} has no cost entry for placement {where!r}")
    return blocks


def _cut_bits(graph: PipelineGraph, blocks: list[BlockSpec]) -> float:
    return blocks[-1].output_bits if blocks else graph.source_bits


def _resolve_link(graph: PipelineGraph, link: LinkSpec | None) -> LinkSpec:
    link = link or graph.link
    if link is None:
        raise ConfigError("no link given and the pipeline carries none")
    return link


def total_energy_cost(graph: PipelineGraph, cfg: PlacementConfig, link: LinkSpec | None = None) -> float:
    """Expected camera energy per source frame: compute plus communication."""
    link = _resolve_link(graph, link)
    blocks = validate(graph, cfg)
    reach = 1.0
    energy = 0.0
    for b in blocks:
        energy += reach * b.compute_cost[cfg.placement[b.id]].energy
        reach *= b.pass_rate
    return energy + reach * _cut_bits(graph, blocks) * link.energy_per_bit


def pipeline_throughput(graph: PipelineGraph, cfg: PlacementConfig, link: LinkSpec | None = None) -> float:
    """Frames per second sustained by the slowest in-camera block or the link."""
    link = _resolve_link(graph, link)
    blocks = validate(graph, cfg)
    rates = [1.0 / b.compute_cost[cfg.placement[b.id]].latency for b in blocks]
    bits = _cut_bits(graph, blocks)
    rates.append(link.bandwidth_bits_per_s / bits if bits > 0 else math.inf)
    return min(rates)


def filter_benefit(filt: BlockSpec, downstream_energy: float, placement: str | None = None) -> float:
    """Energy change per frame from inserting ``filt`` ahead of ``downstream_energy``.

    Negative means the filter saves more downstream work than it costs.
    """
    if not filt.optional:
        raise ConfigError(f"block {filt.id!r} is not an optional filter")
    if placement is None:
        placement = next(p for p in (CAMERA_ACCEL, CAMERA_CPU, CLOUD) if p in filt.compute_cost)
    e = filt.compute_cost[placement].energy
    return e + filt.pass_rate * downstream_energy - downstream_energy


def downstream_energy(graph: PipelineGraph, cfg: PlacementConfig, block_id: str, link: LinkSpec | None = None) -> float:
    """Expected energy spent after ``block_id`` per frame forwarded out of it."""
    link = _resolve_link(graph, link)
    blocks = validate(graph, cfg)
    ids = [b.id for b in blocks]
    start = ids.index(block_id) + 1
    reach = 1.0
    energy = 0.0
    for b in blocks[start:]:
        energy += reach * b.compute_cost[cfg.placement[b.id]].energy
        reach *= b.pass_rate
    return energy + reach * _cut_bits(graph, blocks) * link.energy_per_bit


@dataclass(frozen=True)
class Evaluation:
    config_id: int
    config: PlacementConfig
    throughput: float
    energy: float
    feasible: bool


def iter_configs(graph: PipelineGraph):
    """All valid placement configs in canonical order (cut, subset, placements)."""
    blocks = graph.blocks
    for cut in range(len(blocks) + 1):
        head = blocks[:cut]
        optional = [b.id for b in head if b.optional]
        for r in range(len(optional) + 1):
            for chosen in itertools.combinations(optional, r):
                inc = set(chosen)
                if cut and head[-1].optional and head[-1].id not in inc:
                    continue
                active = [b for b in head if not b.optional or b.id in inc]
                choices = [[p for p in CAMERA_PLACEMENTS if p in b.compute_cost] for b in active]
                for combo in itertools.product(*choices):
                    yield PlacementConfig(inc, {b.id: p for b, p in zip(active, combo)}, cut)


def enumerate_feasible(
    graph: PipelineGraph, link: LinkSpec | None, fps_threshold: float
) -> list[Evaluation]:
    """Evaluate every config; feasible ones first, then by ascending energy."""
    if len(graph.blocks) > 20:
        raise ConfigError("exhaustive enumeration is limited to 20 blocks")
    link = _resolve_link(graph, link)
    out = []
    for i, cfg in enumerate(iter_configs(graph)):
        fps = pipeline_throughput(graph, cfg, link)
        out.append(Evaluation(i, cfg, fps, total_energy_cost(graph, cfg, link), fps >= fps_threshold))
    out.sort(key=lambda e: (not e.feasible, e.energy, e.config_id))
    return out


def feasibility_csv(graph: PipelineGraph, evals: list[Evaluation]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for e in evals:
        w.writerow([
            e.config_id,
            e.config.describe_included(),
            e.config.describe_placement(graph),
            e.config.cut_index,
            repr(float(e.throughput)),
            repr(float(e.energy)),
            int(e.feasible),
        ])
    return buf.getvalue()


def _parse_cost(block_id, where, c) -> Cost:
    if isinstance(c, Mapping):
        return Cost(float(c["energy"]), float(c["latency"]))
    if isinstance(c, (list, tuple)) and len(c) == 2:
        return Cost(float(c[0]), float(c[1]))
    raise ConfigError(f"block {block_id!r}: cost for {where!r} must be {{energy, latency}}")


def graph_from_dict(doc: Mapping) -> PipelineGraph:
    try:
        blocks = []
        for b in doc["blocks"]:
            costs = {k: _parse_cost(b["id"], k, v) for k, v in b["compute_cost"].items()}
            blocks.append(BlockSpec(
                id=str(b["id"]),
                kind=b.get("kind", CORE),
                compute_cost=costs,
                output_bits=float(b["output_bits"]),
                pass_rate=float(b.get("pass_rate", 1.0)),
            ))
        link = None
        if "link" in doc:
            link = LinkSpec(float(doc["link"]["bandwidth_bps"]), float(doc["link"]["energy_per_bit"]))
        return PipelineGraph(tuple(blocks), float(doc["source_bits"]), link)
    except KeyError as exc:
        raise ConfigError(f"pipeline description is missing field {exc.args[0]!r}") from None


def graph_to_dict(graph: PipelineGraph) -> dict:
    doc = {
        "source_bits": graph.source_bits,
        "blocks": [
            {
                "id": b.id,
                "kind": b.kind,
                "compute_cost": {k: {"energy": c.energy, "latency": c.latency} for k, c in b.compute_cost.items()},
                "output_bits": b.output_bits,
                "pass_rate": b.pass_rate,
            }
            for b in graph.blocks
        ],
    }
    if graph.link is not None:
        doc["link"] = {"bandwidth_bps": graph.link.bandwidth_bits_per_s, "energy_per_bit": graph.link.energy_per_bit}
    return doc


def load_pipeline(path) -> PipelineGraph:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    return graph_from_dict(doc)
