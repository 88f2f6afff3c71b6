import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incam import nnauth as nn
from incam.nnauth import AcceleratorGeometry, FixedFormat, MlpModel, SigmoidLut
from incam.synth import gaussian_patches

Q8 = nn.FORMATS[8]


# ------------------------------------------------------------ quantization


@pytest.mark.parametrize("fmt", list(nn.FORMATS.values()))
def test_zero_quantizes_to_zero(fmt):
    assert nn.quantize(0.0, fmt) == 0


def test_half_and_saturation():
    assert nn.quantize(0.5, Q8) == 32
    assert nn.quantize(10.0, Q8) == 127
    assert Q8.to_real(127) == 1.984375
    assert nn.quantize(-10.0, Q8) == -128


def test_ties_go_to_even():
    assert nn.quantize(1.5 / 64, Q8) == 2
    assert nn.quantize(2.5 / 64, Q8) == 2
    assert nn.quantize(-0.5 / 64, Q8) == 0


def test_format_ranges():
    assert (Q8.min_value, Q8.max_value) == (-2.0, 2.0 - 2**-6)
    q16 = nn.FORMATS[16]
    assert (q16.min_value, q16.max_value) == (-4.0, 4.0 - 2**-13)
    with pytest.raises(ValueError):
        FixedFormat(8, 8)
    with pytest.raises(ValueError):
        FixedFormat(8, 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3, allow_nan=False), st.sampled_from([4, 8, 16]))
def test_quantize_matches_exact_rounding(x, bits):
    fmt = nn.FORMATS[bits]
    exact = round(Fraction(x) * 2**fmt.frac_bits)  # Fraction.__round__ ties to even
    assert nn.quantize(x, fmt) == min(max(exact, fmt.code_min), fmt.code_max)


@settings(max_examples=200, deadline=None)
@given(st.integers(-(2**40), 2**40), st.integers(0, 20))
def test_integer_requantization(acc, shift):
    assert int(nn._shift_rne(np.int64(acc), shift)) == round(Fraction(acc, 2**shift))


# --------------------------------------------------------------------- LUT


def test_lut_shape_and_monotone():
    for fmt in nn.FORMATS.values():
        lut = SigmoidLut.build(fmt)
        assert lut.entries.shape == (256,)
        assert np.all(np.diff(lut.entries) >= 0)


def test_lut_examples():
    lut = SigmoidLut.build(Q8)
    assert abs(nn.sigmoid_lut(0.0, lut) - 0.5) <= Q8.step
    assert nn.sigmoid_lut(8.0, lut) >= 0.999 - Q8.step
    assert nn.sigmoid_lut(1.0, lut) == pytest.approx(0.7311, abs=0.01)
    assert nn.sigmoid_lut(-100.0, lut) == nn.sigmoid_lut(-8.0, lut)


@pytest.mark.parametrize("bits", [4, 8, 16])
def test_lut_error_bound(bits):
    fmt = nn.FORMATS[bits]
    lut = SigmoidLut.build(fmt)
    x = np.linspace(-8, 8, 200_001)[:-1]
    err = np.abs(nn.sigmoid_lut(x, lut) - nn.sigmoid(x))
    assert err.max() <= 0.01 + fmt.step


def test_fixed_lookup_agrees_with_real_lookup():
    lut = SigmoidLut.build(Q8)
    codes = np.arange(-2000, 2000)
    for frac in (2, 4, 6, 12):
        real = codes / 2**frac
        np.testing.assert_array_equal(lut.lookup_code(codes, frac), lut.entries[lut.index(real)])


# ---------------------------------------------------------- forward passes


def one_one_one(weight=1.0, bias=0.0):
    return MlpModel((1, 1, 1), (np.array([[weight], [bias]]), np.array([[weight], [bias]])))


def test_float_examples():
    zero = MlpModel((3, 2, 1), (np.zeros((4, 2)), np.zeros((3, 1))))
    assert nn.forward_float(zero, [1, 2, 3]) == 0.5
    s = 1 / (1 + math.exp(-1))
    assert nn.forward_float(one_one_one(), [1.0]) == pytest.approx(1 / (1 + math.exp(-s)))
    assert nn.forward_float(one_one_one(), [1.0]) == pytest.approx(0.6750, abs=1e-4)
    biased = MlpModel((2, 1), (np.array([[0.0], [0.0], [1.5]]),))
    assert nn.forward_float(biased, [3, 4]) == pytest.approx(1 / (1 + math.exp(-1.5)))


def test_float_400_8_1_in_unit_interval():
    rng = np.random.default_rng(0)
    m = nn.init_model((400, 8, 1), rng, spread=1.0)
    s = nn.forward_float(m, rng.uniform(0, 1, 400))
    assert isinstance(s, float) and 0 < s < 1


def test_length_mismatch():
    with pytest.raises(ValueError):
        nn.forward_float(one_one_one(), [1.0, 2.0])
    with pytest.raises(ValueError):
        nn.forward_fixed(one_one_one(), [1.0, 2.0], Q8)


def test_fixed_zero_net():
    zero = MlpModel((3, 2, 1), (np.zeros((4, 2)), np.zeros((3, 1))))
    assert abs(nn.forward_fixed(zero, [1, 0, 1], Q8) - 0.5) <= Q8.step


def oracle_fixed(model, x, fmt):
    """Fixed-point forward pass in Python integers and fractions."""
    f = fmt.frac_bits
    lo, hi = fmt.code_min, fmt.code_max

    def q(v):
        return min(max(round(Fraction(float(v)) * 2**f), lo), hi)

    table = []
    for i in range(256):
        center = -8 + (i + 0.5) / 16
        table.append(q(1 / (1 + math.exp(-center))))
    a = [q(v) for v in x]
    for w in model.weights:
        n_in, n_out = w.shape[0] - 1, w.shape[1]
        out = []
        for j in range(n_out):
            acc = sum(a[i] * q(w[i, j]) for i in range(n_in)) + q(w[n_in, j]) * 2**f
            z = Fraction(round(Fraction(acc, 2**f)), 2**f)
            idx = min(max(math.floor((z + 8) * 16), 0), 255)
            out.append(table[idx])
        a = out
    return a


@pytest.mark.parametrize("bits", [4, 8, 16])
def test_fixed_matches_integer_oracle(bits):
    fmt = nn.FORMATS[bits]
    rng = np.random.default_rng(bits)
    for _ in range(30):
        topo = (int(rng.integers(1, 12)), int(rng.integers(1, 6)), int(rng.integers(1, 3)))
        m = nn.init_model(topo, rng, spread=1.5)
        x = rng.uniform(-0.5, 1.5, topo[0])
        got = np.atleast_1d(nn.forward_fixed_codes(m, x, fmt)).tolist()
        assert got == oracle_fixed(m, x, fmt)


def test_fixed_is_deterministic_and_batched():
    rng = np.random.default_rng(1)
    m = nn.init_model((20, 5, 1), rng, spread=1.0)
    xs = rng.uniform(0, 1, (7, 20))
    batch = nn.forward_fixed(m, xs, Q8)
    single = [nn.forward_fixed(m, x, Q8) for x in xs]
    np.testing.assert_array_equal(batch, single)
    np.testing.assert_array_equal(batch, nn.forward_fixed(m, xs, Q8))


def random_nets(seed, n=100, topo=(16, 8, 1)):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        m = MlpModel(topo, tuple(rng.uniform(-1, 1, (a + 1, b)) for a, b in zip(topo, topo[1:])))
        yield m, rng.uniform(0, 1, topo[0])


def test_eight_bit_close_to_float():
    devs = [abs(nn.forward_fixed(m, x, Q8) - nn.forward_float(m, x)) for m, x in random_nets(5)]
    assert max(devs) <= 0.05


def test_wider_datapath_deviates_less():
    dev = {b: [] for b in (4, 8, 16)}
    for m, x in random_nets(6):
        ref = nn.forward_float(m, x)
        for b in dev:
            dev[b].append(abs(nn.forward_fixed(m, x, nn.FORMATS[b]) - ref))
    med = {b: np.median(v) for b, v in dev.items()}
    assert med[4] >= med[8] >= med[16]


# ------------------------------------------------------------ authenticate


def test_authenticate():
    assert nn.authenticate(0.9, 0.5)
    assert nn.authenticate(0.5, 0.5)
    assert not nn.authenticate(0.49, 0.5)


def test_threshold_sweep_is_monotone():
    rng = np.random.default_rng(2)
    scores = rng.uniform(0, 1, 300)
    labels = rng.uniform(0, 1, 300) < scores
    prev = (1.0, 1.0)
    for t in np.linspace(0, 1.01, 60):
        acc = np.array([nn.authenticate(s, t) for s in scores])
        tpr = np.mean(acc[labels])
        fpr = np.mean(acc[~labels])
        assert tpr <= prev[0] and fpr <= prev[1]
        prev = (tpr, fpr)


# -------------------------------------------------------- systolic model


def test_cycle_examples():
    assert nn.systolic_cycles([400, 8, 1], AcceleratorGeometry(8, 1)) == 419
    assert nn.systolic_cycles([400, 8, 1], AcceleratorGeometry(4, 1)) == 820
    assert nn.systolic_cycles([1, 1], AcceleratorGeometry(1, 1)) == 3


def test_utilization_examples():
    assert nn.total_macs([400, 8, 1]) == 3217
    assert nn.pe_utilization([400, 8, 1], AcceleratorGeometry(8)) == pytest.approx(3217 / (8 * 410))
    assert nn.pe_utilization([400, 8, 1], AcceleratorGeometry(8)) == pytest.approx(0.981, abs=1e-3)
    assert nn.pe_utilization([400, 8, 1], AcceleratorGeometry(16)) < nn.pe_utilization(
        [400, 8, 1], AcceleratorGeometry(8)
    )
    assert nn.pe_utilization([8, 8], AcceleratorGeometry(8)) == 1.0


topologies = st.lists(st.integers(1, 64), min_size=2, max_size=5)


@settings(max_examples=100, deadline=None)
@given(topologies, st.integers(1, 4))
def test_one_pe_is_macs_plus_activations(topo, act):
    assert nn.systolic_cycles(topo, AcceleratorGeometry(1, act)) == nn.total_macs(topo) + act * sum(topo[1:])


@settings(max_examples=100, deadline=None)
@given(topologies, st.integers(1, 32))
def test_cycles_non_increasing_in_pes(topo, pes):
    more = nn.systolic_cycles(topo, AcceleratorGeometry(pes + 1))
    assert more <= nn.systolic_cycles(topo, AcceleratorGeometry(pes))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 8), min_size=2, max_size=4), st.sampled_from([1, 2, 4, 8]))
def test_perfect_tiling_utilization(units, pes):
    topo = [units[0]] + [u * pes for u in units[1:]]
    assert nn.pe_utilization(topo, AcceleratorGeometry(pes)) == 1.0


def test_energy_examples():
    g = AcceleratorGeometry(energy_table={16: 1.0, 8: 0.59})
    assert nn.energy_estimate(100, g, nn.FORMATS[16]) == 100
    assert 1 - nn.energy_estimate(100, g, Q8) / nn.energy_estimate(100, g, nn.FORMATS[16]) == pytest.approx(0.41)
    assert nn.energy_estimate(0, g, Q8) == 0
    with pytest.raises(KeyError):
        nn.energy_estimate(10, g, nn.FORMATS[4])


def test_geometry_needs_a_pe():
    with pytest.raises(ValueError):
        AcceleratorGeometry(num_pes=0)


# ---------------------------------------------------------------- training


def test_identical_pairs_train_to_zero_error():
    x = np.tile(np.linspace(0, 1, 10), (20, 1))
    y = np.ones(20)
    m = nn.train_reference(x, y, (10, 4, 1), epochs=50, rate=0.5, seed=1)
    assert all(nn.forward_float(m, xi) >= 0.5 for xi in x)


def test_zero_epochs_returns_initialization():
    x, y = gaussian_patches(10, seed=0, dim=6)
    m = nn.train_reference(x, y, (6, 3, 1), epochs=0, seed=9)
    init = nn.init_model((6, 3, 1), np.random.default_rng(9))
    for a, b in zip(m.weights, init.weights):
        np.testing.assert_array_equal(a, b)


def test_training_errors():
    with pytest.raises(ValueError):
        nn.train_reference(np.zeros((0, 4)), np.zeros(0), (4, 2, 1))
    with pytest.raises(ValueError):
        nn.train_reference(np.zeros((2, 4)), np.array([0, 2]), (4, 2, 1))


def test_training_is_deterministic():
    x, y = gaussian_patches(40, seed=3, dim=12)
    a = nn.train_reference(x, y, (12, 4, 1), epochs=5, seed=7)
    b = nn.train_reference(x, y, (12, 4, 1), epochs=5, seed=7)
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)


def test_two_gaussian_set():
    x, y = gaussian_patches(2000, seed=42)
    xt, yt = gaussian_patches(1000, seed=43)
    m = nn.train_reference(x, y, (400, 8, 1), epochs=40, rate=0.5, seed=42)
    train_err = np.mean((nn.forward_float(m, x) >= 0.5) != y)
    test_err = np.mean((nn.forward_float(m, xt) >= 0.5) != yt)
    assert train_err <= 0.05
    assert test_err <= 0.10
