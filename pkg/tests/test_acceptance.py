"""Acceptance checks, one test per criterion.

Each test prints a single ``ACCEPT`` line with the measured value, the
tolerance it was held to and the wall time against its budget, then asserts.
"""

import csv
import math
import time

import numpy as np
import pytest

from incam import bssa, costmodel as cm, facefilter as ff, nnauth as nn
from incam.bssa import RefineParams
from incam.cli import main
from incam.costmodel import LinkSpec, PlacementConfig
from incam.fixtures import GBE400, RAW_RIG_FRAME_BITS, data_path
from incam.imgio import GrayImage, load_pgm
from incam.synth import shifted_noise_pair
from oracles import direct_solve, naive_rect_sum
from test_bssa import blocky_image, small_systems
from test_costmodel import assert_matches_oracle, random_chain
from test_facefilter import closed_form_windows, full_evaluation, random_cascade
from test_nnauth import random_nets


@pytest.fixture
def report(capsys):
    def emit(num, name, ok, measured, tolerance, elapsed, budget):
        within = elapsed < budget
        status = "PASS" if ok and within else "FAIL"
        line = f"ACCEPT {num:02d} {status} {name}: {measured} | tol {tolerance} | {elapsed:.2f}s (< {budget:g}s)"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
        assert within, line

    return emit


def csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_c01_raw_offload_fps(report):
    t0 = time.perf_counter()
    g = cm.load_pipeline(data_path("vr_pipeline.json"))
    assert g.source_bits == RAW_RIG_FRAME_BITS
    fps = cm.pipeline_throughput(g, PlacementConfig(set(), {}, 0), LinkSpec(GBE400, g.link.energy_per_bit))
    report(1, "raw offload over 400 Gb/s", abs(fps - 395) <= 1, f"{fps:.3f} FPS", "395 +/- 1", time.perf_counter() - t0, 1)


def test_c02_single_feasible_vr_config(report):
    t0 = time.perf_counter()
    g = cm.load_pipeline(data_path("vr_pipeline.json"))
    evals = cm.enumerate_feasible(g, None, 30.0)
    feasible = [e for e in evals if e.feasible]
    ok = len(feasible) == 1
    if ok:
        cfg = feasible[0].config
        ok = cfg.cut_index == len(g.blocks) and cfg.placement["B3"] == cm.CAMERA_ACCEL
        ok = ok and all(cfg.placement[b.id] == cm.CAMERA_CPU for b in g.blocks if b.id != "B3")
    desc = ", ".join(f"{e.config.cut_index}:{e.throughput:.1f}fps" for e in feasible)
    report(2, "VR fixture at 30 FPS", ok, f"{len(feasible)} feasible [{desc}]", "exactly 1, all in camera, B3 accel",
           time.perf_counter() - t0, 5)


def test_c03_cost_model_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        specs = random_chain(rng, n)
        link = LinkSpec(float(rng.uniform(1e3, 1e6)), float(rng.uniform(1e-4, 1e-2)))
        assert_matches_oracle(specs, float(rng.uniform(1, 1e5)), link, float(rng.uniform(1, 200)))
    report(3, "enumeration vs brute force", True, "100 chains, all configs equal", "exact", time.perf_counter() - t0, 30)


def test_c04_viola_jones(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    px = rng.integers(0, 256, (48, 64))
    ii = ff.integral_image(GrayImage(px.astype(np.uint8)))
    rect_bad = 0
    for _ in range(1000):
        x, y = int(rng.integers(0, 64)), int(rng.integers(0, 48))
        w, h = int(rng.integers(0, 64 - x + 1)), int(rng.integers(0, 48 - y + 1))
        rect_bad += ii.rect_sum(x, y, w, h) != naive_rect_sum(px, x, y, w, h)

    img = GrayImage(rng.integers(0, 256, (40, 40)).astype(np.uint8))
    ii2 = ff.integral_image(img)
    cascade_bad = 0
    for _ in range(100):
        c = random_cascade(rng)
        for _ in range(100):
            scale = float(rng.choice([1.0, 1.25, 1.5, 2.0]))
            window = ff.window_for(c.base_window, scale)
            x, y = (int(v) for v in rng.integers(0, 40 - window + 1, 2))
            cascade_bad += ff.cascade_classify(c, ii2, x, y, scale).accepted != full_evaluation(c, ii2, x, y, scale)

    scale_bad = 0
    for _ in range(200):
        base, w, h = int(rng.integers(1, 41)), int(rng.integers(1, 300)), int(rng.integers(1, 300))
        sf = float(rng.uniform(1.05, 3.0))
        scale_bad += ff.scan_windows(base, w, h, sf) != closed_form_windows(base, w, h, sf)
    ok = rect_bad == cascade_bad == scale_bad == 0
    measured = f"rect mismatches {rect_bad}/1000, cascade {cascade_bad}/10000, scale sets {scale_bad}/200"
    report(4, "integral image, early exit, scale set", ok, measured, "exact", time.perf_counter() - t0, 30)


def test_c05_quantization(report):
    t0 = time.perf_counter()
    x = np.linspace(-8, 8, 200_001)[:-1]
    lut_ok, errs = True, []
    for bits, fmt in sorted(nn.FORMATS.items()):
        err = float(np.abs(nn.sigmoid_lut(x, nn.SigmoidLut.build(fmt)) - nn.sigmoid(x)).max())
        errs.append(f"{bits}b {err:.4f}<={0.01 + fmt.step:.4f}")
        lut_ok &= err <= 0.01 + fmt.step
    dev = {b: [] for b in (4, 8, 16)}
    for m, xin in random_nets(5):
        ref = nn.forward_float(m, xin)
        for b in dev:
            dev[b].append(abs(nn.forward_fixed(m, xin, nn.FORMATS[b]) - ref))
    med = {b: float(np.median(v)) for b, v in dev.items()}
    ok = lut_ok and med[4] >= med[8] >= med[16]
    measured = f"LUT max err {', '.join(errs)}; median dev 4b {med[4]:.4g} 8b {med[8]:.4g} 16b {med[16]:.4g}"
    report(5, "LUT sigmoid and bit-width ordering", ok, measured, "0.01 + step; 4b >= 8b >= 16b",
           time.perf_counter() - t0, 60)


def test_c06_systolic_model(report):
    t0 = time.perf_counter()
    c8 = nn.systolic_cycles([400, 8, 1], nn.AcceleratorGeometry(8))
    c4 = nn.systolic_cycles([400, 8, 1], nn.AcceleratorGeometry(4))
    util = nn.pe_utilization([400, 8, 1], nn.AcceleratorGeometry(8))
    rng = np.random.default_rng(6)
    mono_bad = 0
    for _ in range(50):
        topo = [int(v) for v in rng.integers(1, 512, int(rng.integers(2, 6)))]
        cycles = [nn.systolic_cycles(topo, nn.AcceleratorGeometry(p)) for p in range(1, 65)]
        mono_bad += any(b > a for a, b in zip(cycles, cycles[1:]))
    ok = c8 == 419 and c4 == 820 and abs(util - 0.981) <= 1e-3 and mono_bad == 0
    measured = f"cycles 8PE {c8}, 4PE {c4}; util {util:.4f}; non-monotone topologies {mono_bad}/50"
    report(6, "systolic cycle model", ok, measured, "419, 820, 0.981 +/- 0.001, 0 violations",
           time.perf_counter() - t0, 5)


def test_c07_bilateral_invariants(report):
    t0 = time.perf_counter()
    # constant signal through splat, blur and slice
    const_err = 0.0
    for seed in range(5):
        img = blocky_image(seed)
        g = bssa.splat(img, np.full((32, 32), 42.25), np.ones((32, 32)), 4, 8)
        for grid in (g, bssa.grid_blur(g)):
            const_err = max(const_err, float(np.abs(bssa.slice_grid(grid, img) - 42.25).max()))
    const_ok = const_err <= 64 * np.finfo(float).eps * 42.25

    # splat mass with dyadic weights, so every partial sum is exact
    rng = np.random.default_rng(7)
    mass_bad = 0
    for _ in range(50):
        h, w = (int(v) for v in rng.integers(1, 40, 2))
        img = GrayImage(rng.integers(0, 256, (h, w)).astype(np.uint8))
        wts = rng.integers(0, 1024, (h, w)) / 1024
        vals = rng.integers(-512, 512, (h, w)) / 64
        g = bssa.splat(img, vals, wts, float(rng.uniform(1, 16)), float(rng.uniform(1, 64)))
        mass_bad += g.weight_sum.sum() != wts.sum() or g.value_sum.sum() != (wts * vals).sum()

    # Jacobi vs direct on small systems
    jac_err, systems = 0.0, 0
    for occ, c, t, lam in small_systems():
        res = bssa.jacobi_solve(c, t, occ, RefineParams(lam=lam, max_iters=20_000, tol=1e-10))
        for v, val in direct_solve(c, t, occ, lam).items():
            jac_err = max(jac_err, abs(res.v[v] - val))
        systems += 1

    # energy descent on the shipped fixture and on the small systems
    rises = 0
    left, right = load_pgm(data_path("stereo", "left.pgm")), load_pgm(data_path("stereo", "right.pgm"))
    rough = bssa.rough_disparity(left, right, 16, 9)
    for size in (8, 16, 32):
        e = bssa.refine_disparity_detailed(rough, left, size, size, RefineParams(max_iters=60), track_energy=True).energies
        rises += sum(b > a * (1 + 1e-12) for a, b in zip(e, e[1:]))
    for occ, c, t, lam in small_systems():
        e = bssa.jacobi_solve(c, t, occ, RefineParams(lam=lam, max_iters=50), track_energy=True).energies
        rises += sum(b > a + 1e-12 * max(1.0, a) for a, b in zip(e, e[1:]))

    ok = const_ok and mass_bad == 0 and jac_err <= 1e-6 and rises == 0
    measured = (f"const err {const_err:.2e}; mass mismatches {mass_bad}/50; "
                f"Jacobi max err {jac_err:.2e} over {systems} systems; energy rises {rises}")
    report(7, "bilateral grid invariants", ok, measured, "rounding; exact; 1e-6; 0", time.perf_counter() - t0, 60)


def test_c08_stereo_accuracy(report, tmp_path):
    t0 = time.perf_counter()
    left, right = shifted_noise_pair()
    d = bssa.rough_disparity(left, right, 16, 9)
    frac = float(np.mean(d.disparity[8:-8, 16:-8] == 5))
    assert main(["stereo", "--out", str(tmp_path)]) == 0
    err = {r["metric"]: float(r["value"]) for r in csv_rows(tmp_path / "stereo_report.csv")}["refined_median_error"]
    ok = frac >= 0.99 and err <= 1.0
    report(8, "stereo accuracy", ok, f"shift-5 interior correct {frac:.4f}; refined median error {err:.3f} px",
           ">= 0.99; <= 1 px", time.perf_counter() - t0, 120)


def test_c09_grid_sweep_trend(report, tmp_path):
    t0 = time.perf_counter()
    assert main(["sweep", "--out", str(tmp_path)]) == 0
    rows = csv_rows(tmp_path / "sweep.csv")
    sizes = [int(r["size"]) for r in rows]
    scores = [float(r["ms_ssim"]) for r in rows]
    verts = [int(r["vertices"]) for r in rows]
    ms = [float(r["refine_ms"]) for r in rows]
    rises = [b - a for a, b in zip(scores, scores[1:]) if b > a]
    ok = (sizes == [4, 8, 16, 32, 64] and len(rises) <= 1 and all(r <= 0.005 for r in rises)
          and all(b < a for a, b in zip(verts, verts[1:])) and ms[-1] < ms[0])
    measured = (f"MS-SSIM {[round(s, 4) for s in scores]}; vertices {verts}; "
                f"time 64px {ms[-1]:.0f} ms vs 4px {ms[0]:.0f} ms")
    report(9, "grid size sweep", ok, measured, "<= 1 inversion of <= 0.005; strict; faster",
           time.perf_counter() - t0, 300)


def test_c10_filter_economics(report, tmp_path):
    t0 = time.perf_counter()
    on, off = tmp_path / "on", tmp_path / "off"
    assert main(["face", "--out", str(on)]) == 0
    assert main(["face", "--no-filters", "--out", str(off)]) == 0
    s_on = {r["metric"]: r["value"] for r in csv_rows(on / "face_summary.csv")}
    s_off = {r["metric"]: r["value"] for r in csv_rows(off / "face_summary.csv")}
    e_on, e_off = float(s_on["measured_energy_per_frame"]), float(s_off["measured_energy_per_frame"])
    benefits = float(s_on["filter_benefit_motion"]), float(s_on["filter_benefit_detect"])
    cheaper = e_on < e_off if all(b < 0 for b in benefits) else True
    consistent = (
        math.isclose(float(s_on["model_energy_no_filters"]), e_off, rel_tol=1e-9)
        and math.isclose(e_on, float(s_on["model_energy_per_frame"]), rel_tol=1e-9)
        and math.isclose(e_off, float(s_off["model_energy_per_frame"]), rel_tol=1e-9)
        and s_on["frames"] == s_off["frames"]
    )
    ok = cheaper and consistent
    measured = (f"filters {e_on:.4f} vs no filters {e_off:.4f} per frame; benefit motion {benefits[0]:.4f}, "
                f"detect {benefits[1]:.4f}; model/measured agree {consistent}")
    report(10, "filter economics on face fixture", ok, measured, "lower when benefit < 0; rel 1e-9",
           time.perf_counter() - t0, 120)
