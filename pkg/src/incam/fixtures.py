"""Shipped fixture files and the code that (re)generates them.

The VR pipeline costs are illustrative rig-scale numbers chosen to exhibit
the offload structure under study (only the fully in-camera chain with the
refinement block accelerated sustains 30 FPS over 25 GbE). They are not
measurements; ``incam stereo --emit-fixture`` writes a fixture measured from
this package's own blocks instead.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from incam import nnauth, synth
from incam.imgio import GrayImage, save_pgm

DATA = Path(str(resources.files("incam") / "data"))

GBE25 = 25e9
GBE400 = 400e9
# raw 16-camera frame that a 400 GbE link uploads at 395 FPS
RAW_RIG_FRAME_BITS = GBE400 / 395.0

STEREO_PARAMS = {"max_disp": 16, "block": 9, "sigma_spatial": 8, "sigma_range": 8, "lambda": 4}
FACE_FRAME_SIZE = (96, 72)


def data_path(*parts) -> Path:
    return DATA.joinpath(*parts)


def vr_pipeline() -> dict:
    cpu, acc = "camera-cpu", "camera-accel"
    return {
        "notes": "Illustrative rig-scale costs (energy in J/frame, latency in s).",
        "source_bits": RAW_RIG_FRAME_BITS,
        "link": {"bandwidth_bps": GBE25, "energy_per_bit": 2e-10},
        "blocks": [
            {"id": "B1", "kind": "core", "output_bits": RAW_RIG_FRAME_BITS,
             "compute_cost": {cpu: {"energy": 0.05, "latency": 1 / 120}}},
            {"id": "B2", "kind": "core", "output_bits": 2.4e9,
             "compute_cost": {cpu: {"energy": 0.4, "latency": 1 / 45}}},
            {"id": "B3", "kind": "core", "output_bits": 0.95e9,
             "compute_cost": {cpu: {"energy": 6.0, "latency": 1 / 2}, acc: {"energy": 0.9, "latency": 1 / 34}}},
            {"id": "B4", "kind": "core", "output_bits": 0.2e9,
             "compute_cost": {cpu: {"energy": 0.3, "latency": 1 / 40}}},
        ],
    }


def face_pipeline() -> dict:
    w, h = FACE_FRAME_SIZE
    acc = "camera-accel"
    geom = nnauth.AcceleratorGeometry()
    nn_energy = nnauth.energy_estimate(nnauth.systolic_cycles([400, 8, 1], geom), geom, nnauth.FORMATS[8])
    return {
        "notes": "Energy units per frame; NN energy follows the systolic model at 8 PEs, 8 bits.",
        "source_bits": w * h * 8,
        "link": {"bandwidth_bps": 1e6, "energy_per_bit": 1.0},
        "blocks": [
            {"id": "motion", "kind": "optional", "output_bits": w * h * 8, "pass_rate": 0.5,
             "compute_cost": {acc: {"energy": 2.0, "latency": 1e-3}}},
            {"id": "detect", "kind": "optional", "output_bits": 20 * 20 * 8, "pass_rate": 0.5,
             "compute_cost": {acc: {"energy": 40.0, "latency": 2e-2}}},
            {"id": "nn", "kind": "core", "output_bits": 8,
             "compute_cost": {acc: {"energy": nn_energy, "latency": 1e-3}}},
        ],
    }


def train_auth_mlp() -> nnauth.MlpModel:
    x, y = synth.auth_patches(150, seed=11)
    m = nnauth.train_reference(x, y, (400, 8, 1), epochs=150, rate=0.5, seed=42)
    return nnauth.MlpModel(m.topology, m.weights, nnauth.FORMATS[8])


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1) + "\n")


def build_all(dest: Path | None = None) -> Path:
    dest = Path(dest) if dest is not None else DATA
    dest.mkdir(parents=True, exist_ok=True)
    write_json(dest / "vr_pipeline.json", vr_pipeline())
    write_json(dest / "face_pipeline.json", face_pipeline())
    (dest / "toy_cascade.json").write_text(synth.toy_cascade().to_json() + "\n")
    (dest / "auth_mlp.json").write_text(train_auth_mlp().to_json() + "\n")

    frames, plan = synth.face_frames(*FACE_FRAME_SIZE)
    fdir = dest / "face_frames"
    fdir.mkdir(exist_ok=True)
    for i, f in enumerate(frames):
        save_pgm(fdir / f"frame_{i:04d}.pgm", f)
    write_json(fdir / "truth.json", {"frames": [p and {"kind": p[0], "x": p[1], "y": p[2], "size": p[3]} for p in plan]})

    static = dest / "face_static"
    static.mkdir(exist_ok=True)
    for i in range(4):
        save_pgm(static / f"frame_{i:04d}.pgm", frames[i])

    left, right, gt = synth.stereo_scene()
    sdir = dest / "stereo"
    sdir.mkdir(exist_ok=True)
    save_pgm(sdir / "left.pgm", left)
    save_pgm(sdir / "right.pgm", right)
    save_pgm(sdir / "gt_disp.pgm", GrayImage(gt.astype(np.uint8)))
    write_json(sdir / "stereo.json", {**STEREO_PARAMS, "ground_truth": "gt_disp.pgm"})

    l5, r5 = synth.shifted_noise_pair()
    shdir = dest / "shift5"
    shdir.mkdir(exist_ok=True)
    save_pgm(shdir / "left.pgm", l5)
    save_pgm(shdir / "right.pgm", r5)
    write_json(shdir / "stereo.json", {**STEREO_PARAMS, "ground_truth": None, "shift": 5})
    return dest
