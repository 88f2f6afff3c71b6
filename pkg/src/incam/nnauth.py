"""Face-authentication MLP: float reference, fixed-point inference, accelerator model.

Fixed-point datapath: inputs, weights and activations are two's-complement
codes in a :class:`FixedFormat`. Each neuron accumulates exact products in a
wide integer (2 * frac fractional bits), adds the bias, and requantizes once
(round-to-nearest-even) to ``frac`` fractional bits. That pre-activation
addresses a 256-entry sigmoid table spanning [-8, 8); out-of-range inputs
clamp to the end bins. Table entries are stored in the active format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

LUT_SIZE = 256
LUT_LO, LUT_HI = -8.0, 8.0


@dataclass(frozen=True)
class FixedFormat:
    total_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.total_bits not in (4, 8, 16):
            raise ValueError(f"total_bits must be 4, 8 or 16, got {self.total_bits}")
        if not 0 < self.frac_bits < self.total_bits:
            raise ValueError(f"frac_bits must lie in (0, {self.total_bits}), got {self.frac_bits}")

    @property
    def code_min(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def code_max(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def step(self) -> float:
        return 2.0**-self.frac_bits

    @property
    def min_value(self) -> float:
        return self.code_min * self.step

    @property
    def max_value(self) -> float:
        return self.code_max * self.step

    def to_real(self, code):
        return np.asarray(code, dtype=np.float64) * self.step


# sign + 1 integer + 6 fraction; sign + 2 + 13; sign + 1 + 2
FORMATS = {8: FixedFormat(8, 6), 16: FixedFormat(16, 13), 4: FixedFormat(4, 2)}


def quantize(x, fmt: FixedFormat):
    """Round-to-nearest-even of ``x * 2**frac``, saturated to the format's code range."""
    codes = np.clip(np.rint(np.asarray(x, dtype=np.float64) * (1 << fmt.frac_bits)), fmt.code_min, fmt.code_max)
    codes = codes.astype(np.int64)
    return int(codes) if codes.ndim == 0 else codes


def _shift_rne(acc: np.ndarray, shift: int) -> np.ndarray:
    """Integer ``acc / 2**shift`` rounded to nearest, ties to even."""
    if shift == 0:
        return acc
    q = acc >> shift  # floor
    rem = acc - (q << shift)
    half = 1 << (shift - 1)
    up = (rem > half) | ((rem == half) & (q & 1 == 1))
    return q + up


@dataclass(frozen=True)
class SigmoidLut:
    fmt: FixedFormat
    entries: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, fmt: FixedFormat) -> "SigmoidLut":
        width = (LUT_HI - LUT_LO) / LUT_SIZE
        centers = LUT_LO + (np.arange(LUT_SIZE) + 0.5) * width
        entries = quantize(1.0 / (1.0 + np.exp(-centers)), fmt)
        entries.setflags(write=False)
        return cls(fmt, entries)

    def index(self, x) -> np.ndarray:
        """Bin index of real pre-activations ``x`` (clamped to the table)."""
        b = np.floor((np.asarray(x, dtype=np.float64) - LUT_LO) * (LUT_SIZE / (LUT_HI - LUT_LO)))
        return np.clip(b, 0, LUT_SIZE - 1).astype(np.int64)

    def lookup_code(self, z_code, z_frac: int) -> np.ndarray:
        """Table lookup for fixed-point pre-activations with ``z_frac`` fraction bits."""
        # bins are 1/16 wide: index = floor((z + 8) * 16), exact in integers
        z = np.asarray(z_code, dtype=np.int64)
        shift = z_frac - 4
        offset = 8 << z_frac
        if shift >= 0:
            idx = (z + offset) >> shift
        else:
            idx = (z + offset) << -shift
        return self.entries[np.clip(idx, 0, LUT_SIZE - 1)]


def sigmoid_lut(x, lut: SigmoidLut):
    """LUT sigmoid of real ``x``; returns the real value of the stored entry."""
    return lut.fmt.to_real(lut.entries[lut.index(x)])


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class MlpModel:
    """Dense sigmoid network. ``weights[l]`` has shape (n_in + 1, n_out); the last row is the bias."""

    topology: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    fmt: FixedFormat | None = None

    def __post_init__(self):
        topo = tuple(int(n) for n in self.topology)
        if len(topo) < 2 or min(topo) < 1:
            raise ValueError(f"bad topology {topo}")
        mats = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        if len(mats) != len(topo) - 1:
            raise ValueError(f"{len(topo) - 1} weight matrices needed, got {len(mats)}")
        for i, m in enumerate(mats):
            if m.shape != (topo[i] + 1, topo[i + 1]):
                raise ValueError(f"layer {i} weights have shape {m.shape}, expected {(topo[i] + 1, topo[i + 1])}")
            m.setflags(write=False)
        object.__setattr__(self, "topology", topo)
        object.__setattr__(self, "weights", mats)

    def to_dict(self) -> dict:
        doc = {"topology": list(self.topology), "weights": [w.tolist() for w in self.weights], "lut_domain": [-8, 8]}
        if self.fmt is not None:
            doc["format"] = {"bits": self.fmt.total_bits, "frac": self.fmt.frac_bits}
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_input(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.topology[0]:
        raise ValueError(f"input length {x.shape[-1]} != {model.topology[0]} input neurons")
    return x


def forward_float(model: MlpModel, x) -> float | np.ndarray:
    """Exact-sigmoid forward pass. Accepts one input vector or a batch (rows)."""
    a = _check_input(model, x)
    for w in model.weights:
        a = sigmoid(a @ w[:-1] + w[-1])
    return float(a[0]) if a.ndim == 1 and a.size == 1 else (a[..., 0] if a.shape[-1] == 1 else a)


def forward_fixed_codes(model: MlpModel, x, fmt: FixedFormat, lut: SigmoidLut | None = None) -> np.ndarray:
    """Bit-exact fixed-point forward pass; returns output activation codes."""
    if lut is None:
        lut = SigmoidLut.build(fmt)
    elif lut.fmt != fmt:
        raise ValueError("LUT format differs from the datapath format")
    a = quantize(_check_input(model, x), fmt)
    a = np.asarray(a, dtype=np.int64)
    f = fmt.frac_bits
    for w in model.weights:
        wq = np.asarray(quantize(w, fmt), dtype=np.int64)
        acc = a @ wq[:-1] + (wq[-1] << f)  # 2f fraction bits
        z = _shift_rne(acc, f)
        a = lut.lookup_code(z, f)
    return a


def forward_fixed(model: MlpModel, x, fmt: FixedFormat, lut: SigmoidLut | None = None):
    """Fixed-point score(s) as real values."""
    codes = forward_fixed_codes(model, x, fmt, lut)
    out = fmt.to_real(codes)
    return float(out[0]) if out.ndim == 1 and out.size == 1 else (out[..., 0] if out.shape[-1] == 1 else out)


def authenticate(score: float, threshold: float = 0.5) -> bool:
    return bool(score >= threshold)


@dataclass(frozen=True)
class AcceleratorGeometry:
    num_pes: int = 8
    activation_latency: int = 1
    # per-MAC-cycle energy; 8-bit at 0.59x of 16-bit reproduces the 41% saving.
    # The 4-bit entry is an assumption (0.59 squared), not a measured figure.
    energy_table: dict = field(default_factory=lambda: {16: 1.0, 8: 0.59, 4: 0.35})

    def __post_init__(self):
        if self.num_pes < 1:
            raise ValueError("num_pes must be >= 1")


def mac_cycles(topology, num_pes: int) -> int:
    return sum(math.ceil(n_out / num_pes) * (n_in + 1) for n_in, n_out in zip(topology, topology[1:]))


def total_macs(topology) -> int:
    return sum((n_in + 1) * n_out for n_in, n_out in zip(topology, topology[1:]))


def systolic_cycles(topology, geom: AcceleratorGeometry) -> int:
    """Cycles for one inference: tiled MAC passes (bias included) plus one activation per neuron."""
    acts = sum(topology[1:]) * geom.activation_latency
    return mac_cycles(topology, geom.num_pes) + acts


def pe_utilization(topology, geom: AcceleratorGeometry) -> float:
    return total_macs(topology) / (geom.num_pes * mac_cycles(topology, geom.num_pes))


def energy_estimate(cycles: int, geom: AcceleratorGeometry, fmt: FixedFormat) -> float:
    try:
        per_cycle = geom.energy_table[fmt.total_bits]
    except KeyError:
        raise KeyError(f"energy table has no entry for {fmt.total_bits}-bit datapaths") from None
    return cycles * per_cycle


def init_model(topology, rng: np.random.Generator, spread: float = 0.1) -> MlpModel:
    mats = [rng.uniform(-spread, spread, size=(n_in + 1, n_out)) for n_in, n_out in zip(topology, topology[1:])]
    return MlpModel(tuple(topology), tuple(mats))


def train_reference(
    inputs,
    labels,
    topology=(400, 8, 1),
    epochs: int = 200,
    rate: float = 0.5,
    seed: int = 42,
    batch_size: int = 16,
) -> MlpModel:
    """Mini-batch backprop on squared error. Deterministic for a given seed."""
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(len(x), -1)
    if len(x) == 0:
        raise ValueError("empty training set")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    rng = np.random.default_rng(seed)
    model = init_model(topology, rng)
    ws = [w.copy() for w in model.weights]
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), batch_size):
            idx = order[start : start + batch_size]
            acts = [x[idx]]
            for w in ws:
                acts.append(sigmoid(acts[-1] @ w[:-1] + w[-1]))
            delta = (acts[-1] - y[idx]) * acts[-1] * (1 - acts[-1])
            for layer in range(len(ws) - 1, -1, -1):
                a_in = acts[layer]
                grad_w = a_in.T @ delta / len(idx)
                grad_b = delta.mean(axis=0)
                if layer:
                    back = delta @ ws[layer][:-1].T
                    delta = back * a_in * (1 - a_in)
                ws[layer][:-1] -= rate * grad_w
                ws[layer][-1] -= rate * grad_b
    return MlpModel(tuple(topology), tuple(ws))
