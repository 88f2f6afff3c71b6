"""``incam`` command line: face pipeline, stereo, offload analysis, grid sweep.

Exit codes: 0 success, 1 usage error, 2 unreadable or malformed input,
3 analysis found no feasible configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from incam import __version__, bssa, costmodel, facefilter, nnauth
from incam.fixtures import GBE25, data_path
from incam.imgio import GrayImage, ParseError, load_cascade_json, load_mlp_json, load_pgm, save_pgm
from incam.metrics import classification_report
from incam.synth import PATCH, resize_area

log = logging.getLogger("incam")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Run:
    """Collects stage timings and outputs; writes ``manifest.json`` next to them."""

    def __init__(self, command: str, args: argparse.Namespace, out: Path):
        self.command = command
        self.args = args
        self.out = out
        self.stages: dict[str, float] = {}
        self.outputs: list[str] = []
        self.inputs: dict[str, str] = {}
        self.resolved: dict = {}
        out.mkdir(parents=True, exist_ok=True)

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def write_csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        return p

    def finish(self):
        params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(self.args).items() if k != "func"}
        manifest = {
            "command": self.command,
            "inputs": self.inputs,
            "parameters": params,
            "resolved_parameters": self.resolved,
            "seed": self.args.seed,
            "version": __version__,
            "stage_seconds": self.stages,
            "outputs": self.outputs,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def _read_pgm(path) -> GrayImage:
    try:
        return load_pgm(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except ParseError as exc:
        raise InputError(f"{path}: {exc}") from None


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_graph(path) -> costmodel.PipelineGraph:
    try:
        return costmodel.load_pipeline(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except costmodel.ConfigError as exc:
        raise InputError(str(exc)) from None


def _fmt(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------------- face


def _patch(img: GrayImage, det: facefilter.Detection | None) -> np.ndarray:
    px = img.pixels.astype(np.float64)
    if det is not None:
        px = px[det.y : det.y + det.window, det.x : det.x + det.window]
    return resize_area(px, PATCH, PATCH).ravel() / 255.0


def run_face(args) -> int:
    run = Run("face", args, args.out)
    frames_dir = Path(args.frames)
    paths = sorted(frames_dir.glob("*.pgm"))
    if not paths:
        raise InputError(f"no PGM frames in {frames_dir}")
    run.inputs = {"frames": str(frames_dir), "cascade": str(args.cascade), "mlp": str(args.mlp), "pipeline": str(args.pipeline)}
    with run.stage("load"):
        frames = [_read_pgm(p) for p in paths]
        try:
            cascade = load_cascade_json(_read_bytes(args.cascade))
            mlp = load_mlp_json(_read_bytes(args.mlp))
        except ParseError as exc:
            raise InputError(str(exc)) from None
        graph = _load_graph(args.pipeline)
    try:
        b_motion, b_detect, b_nn = (graph.blocks[graph.index(k)] for k in ("motion", "detect", "nn"))
    except costmodel.ConfigError as exc:
        raise InputError(f"{args.pipeline}: {exc}") from None

    fmt = nnauth.FORMATS[args.bits]
    geom = nnauth.AcceleratorGeometry(num_pes=args.pes)
    lut = nnauth.SigmoidLut.build(fmt)
    where = costmodel.CAMERA_ACCEL
    e_motion = b_motion.compute_cost[where].energy
    e_detect = b_detect.compute_cost[where].energy
    e_nn = nnauth.energy_estimate(nnauth.systolic_cycles(mlp.topology, geom), geom, fmt)
    link = graph.link
    e_comm = b_nn.output_bits * link.energy_per_bit
    filters = not args.no_filters

    rows = []
    n_motion = n_faces = n_nn = n_auth = 0
    decisions = []
    for i, frame in enumerate(frames):
        motion = faces = ""
        det = None
        em = ed = en = ec = 0.0
        run_nn = True
        if filters:
            em = e_motion
            with run.stage("motion"):
                moved = i > 0 and facefilter.motion_detect(frames[i - 1], frame, args.pixel_thresh, args.area_frac)
            motion = int(moved)
            faces = 0
            run_nn = False
            if moved:
                n_motion += 1
                ed = e_detect
                with run.stage("detect"):
                    dets = facefilter.merge_overlaps(facefilter.scan(cascade, frame, args.scale_factor))
                faces = len(dets)
                if dets:
                    n_faces += 1
                    det = dets[0]  # largest window
                    run_nn = True
        authenticated = 0
        score = ""
        if run_nn:
            with run.stage("nn"):
                s = nnauth.forward_fixed(mlp, _patch(frame, det), fmt, lut)
            n_nn += 1
            en, ec = e_nn, e_comm
            authenticated = int(nnauth.authenticate(s, args.threshold))
            n_auth += authenticated
            score = _fmt(s)
        decisions.append(bool(authenticated))
        rows.append([paths[i].name, motion, faces, authenticated,
                     _fmt(em), _fmt(ed), _fmt(en), _fmt(ec), _fmt(em + ed + en + ec), int(run_nn), score])
    run.write_csv(
        "face_frames.csv",
        ["frame", "motion", "faces", "authenticated",
         "e_motion", "e_detect", "e_nn", "e_comm", "e_total", "nn_invoked", "score"],
        rows,
    )

    n = len(frames)
    measured = sum(float(r[8]) for r in rows) / n
    # cost model with the measured pass rates
    pr_motion = n_motion / n
    pr_detect = n_faces / n_motion if n_motion else 0.0
    nn_block = replace(b_nn, compute_cost={where: costmodel.Cost(e_nn, b_nn.compute_cost[where].latency)})
    blocks = [replace(b_motion, pass_rate=pr_motion), replace(b_detect, pass_rate=pr_detect), nn_block]
    g = costmodel.PipelineGraph(tuple(blocks), graph.source_bits, link)
    all_accel = {b.id: where for b in blocks}
    with_filters = costmodel.PlacementConfig({"motion", "detect"}, all_accel, 3)
    without = costmodel.PlacementConfig((), {"nn": where}, 3)
    cfg = with_filters if filters else without
    model = costmodel.total_energy_cost(g, cfg)
    downstream_detect = costmodel.downstream_energy(g, with_filters, "detect")
    # motion's downstream is the pipeline without motion: detect then NN
    g_nm = costmodel.PipelineGraph(tuple(blocks[1:]), graph.source_bits, link)
    downstream_motion = costmodel.total_energy_cost(g_nm, costmodel.PlacementConfig({"detect"}, {"detect": where, "nn": where}, 2))
    summary = [
        ("mode", "filters" if filters else "no-filters"),
        ("frames", n),
        ("motion_frames", n_motion),
        ("face_frames", n_faces),
        ("nn_invocations", n_nn),
        ("authenticated", n_auth),
        ("measured_energy_per_frame", _fmt(measured)),
        ("model_energy_per_frame", _fmt(model)),
        ("model_energy_no_filters", _fmt(costmodel.total_energy_cost(g, without))),
    ]
    if filters:
        # pass rates are only observable when the filters actually run
        summary += [
            ("pass_rate_motion", _fmt(pr_motion)),
            ("pass_rate_detect", _fmt(pr_detect)),
            ("model_energy_filters", _fmt(costmodel.total_energy_cost(g, with_filters))),
            ("filter_benefit_motion", _fmt(costmodel.filter_benefit(blocks[0], downstream_motion, where))),
            ("filter_benefit_detect", _fmt(costmodel.filter_benefit(blocks[1], downstream_detect, where))),
        ]
    truth_file = frames_dir / "truth.json"
    if truth_file.exists():
        truth = json.loads(truth_file.read_text())["frames"]
        labels = [bool(t) and t["kind"] == "reference" for t in truth[:n]]
        rep = classification_report(decisions, labels)
        summary += [("error_rate", _fmt(rep.error_rate)), ("false_accept_rate", _fmt(rep.false_accept_rate)),
                    ("false_reject_rate", _fmt(rep.false_reject_rate))]
    run.write_csv("face_summary.csv", ["metric", "value"], summary)
    run.write_csv("timing.csv", ["stage", "ms"], [(k, f"{v * 1e3:.3f}") for k, v in run.stages.items()])
    run.finish()
    print(f"{n} frames, motion {n_motion}, faces {n_faces}, nn {n_nn}, authenticated {n_auth}; "
          f"energy/frame {measured:.3f}")
    return EXIT_OK


# ------------------------------------------------------------------- stereo


def _sidecar(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg})") from None


def _stereo_params(args, side: dict) -> dict:
    pick = lambda flag, key, default: flag if flag is not None else side.get(key, default)  # noqa: E731
    return {
        "max_disp": int(pick(args.max_disp, "max_disp", 64)),
        "block": int(pick(args.block, "block", 9)),
        "sigma_spatial": float(pick(args.grid_size, "sigma_spatial", bssa.DEFAULT_SIGMA_SPATIAL)),
        "sigma_range": float(pick(args.sigma_range, "sigma_range", bssa.DEFAULT_SIGMA_RANGE)),
        "lambda": float(pick(args.lam, "lambda", 4.0)),
    }


def _measured_fixture(stages: dict, width: int, height: int, link_bps: float) -> dict:
    # desk-scale measurement of this package's blocks on one stereo pair;
    # energy assumes a 2 W embedded CPU while the block runs
    px = width * height
    cpu = costmodel.CAMERA_CPU
    watts = 2.0
    lat = {k: max(v, 1e-6) for k, v in stages.items()}
    block = lambda bid, t, bits: {  # noqa: E731
        "id": bid, "kind": "core", "output_bits": bits,
        "compute_cost": {cpu: {"energy": watts * t, "latency": t}},
    }
    return {
        "notes": "Measured on this machine from incam's own blocks (one stereo pair).",
        "source_bits": 2 * px * 8,
        "link": {"bandwidth_bps": link_bps, "energy_per_bit": 2e-10},
        "blocks": [
            block("B1", lat["load"], 2 * px * 8),
            block("B2", lat["rough"], 2 * px * 8 + 2 * px * 32),
            block("B3", lat["refine"], px * 8 + px * 32),
            block("B4", lat["stitch"], px * 8 + px * 8),
        ],
    }


def run_stereo(args) -> int:
    run = Run("stereo", args, args.out)
    if args.sidecar is None and (Path(args.left).parent / "stereo.json").exists():
        args.sidecar = str(Path(args.left).parent / "stereo.json")
    side = _sidecar(args.sidecar)
    p = _stereo_params(args, side)
    run.resolved = p
    run.inputs = {"left": str(args.left), "right": str(args.right), "sidecar": str(args.sidecar)}
    with run.stage("load"):
        left, right = _read_pgm(args.left), _read_pgm(args.right)
    if left.pixels.shape != right.pixels.shape:
        raise InputError("left and right images differ in size")
    try:
        with run.stage("rough"):
            rough = bssa.rough_disparity(left, right, p["max_disp"], p["block"])
        with run.stage("refine"):
            res = bssa.refine_disparity_detailed(
                rough, left, p["sigma_spatial"], p["sigma_range"], bssa.RefineParams(lam=p["lambda"])
            )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    refined = res.disparity
    with run.stage("stitch"):
        bssa.stitch_panorama([refined, refined], [_as_rgb(left), _as_rgb(left)], min(16, left.width))
    save_pgm(run.path("depth.pgm"), refined.to_gray())
    save_pgm(run.path("rough.pgm"), rough.to_gray())
    report = [
        ("width", left.width), ("height", left.height),
        ("grid_vertices", int(np.prod(res.grid_dims))), ("iterations", res.iterations),
        ("mean_disparity", _fmt(refined.disparity.mean())),
    ]
    gt_path = None
    if args.ground_truth:
        gt_path = Path(args.ground_truth)
    elif side.get("ground_truth"):
        # sidecar paths are relative to the sidecar
        gt_path = Path(args.sidecar).parent / side["ground_truth"]
    if gt_path is not None:
        gt = _read_pgm(gt_path).pixels.astype(np.float64)
        report += [
            ("rough_median_error", _fmt(np.median(np.abs(rough.disparity - gt)))),
            ("refined_median_error", _fmt(np.median(np.abs(refined.disparity - gt)))),
        ]
    run.write_csv("stereo_report.csv", ["metric", "value"], report)
    run.write_csv("timing.csv", ["stage", "ms"], [(k, f"{v * 1e3:.3f}") for k, v in run.stages.items()])
    if args.emit_fixture:
        fx = _measured_fixture(run.stages, left.width, left.height, GBE25)
        run.path("pipeline_fixture.json").write_text(json.dumps(fx, indent=1) + "\n")
    run.finish()
    print(f"disparity written to {args.out / 'depth.pgm'} ({res.iterations} solver iterations)")
    return EXIT_OK


def _as_rgb(img: GrayImage):
    from incam.imgio import RgbImage

    return RgbImage(np.repeat(img.pixels[..., None], 3, axis=2))


# ------------------------------------------------------------------ analyze


def run_analyze(args) -> int:
    run = Run("analyze", args, args.out)
    run.inputs = {"pipeline": str(args.pipeline)}
    graph = _load_graph(args.pipeline)
    link = graph.link
    if args.bandwidth_bps is not None:
        epb = link.energy_per_bit if link else 1e-10
        link = costmodel.LinkSpec(args.bandwidth_bps, epb)
    if link is None:
        raise InputError(f"{args.pipeline}: no link given (add 'link' or pass --bandwidth-bps)")
    with run.stage("enumerate"):
        evals = costmodel.enumerate_feasible(graph, link, args.fps_threshold)
    p = run.path("feasibility.csv")
    p.write_text(costmodel.feasibility_csv(graph, evals))
    run.finish()
    feasible = [e for e in evals if e.feasible]
    print(f"{len(feasible)} of {len(evals)} configurations reach {args.fps_threshold:g} FPS")
    for e in feasible:
        print(f"  cut {e.config.cut_index}: {e.config.describe_placement(graph)} -> "
              f"{e.throughput:.1f} FPS, energy {e.energy:.4g}")
    return EXIT_OK if feasible else EXIT_INFEASIBLE


# -------------------------------------------------------------------- sweep


def run_sweep(args) -> int:
    run = Run("sweep", args, args.out)
    scene = Path(args.scene)
    side = _sidecar(scene / "stereo.json") if (scene / "stereo.json").exists() else {}
    p = _stereo_params(args, side)
    run.resolved = p
    run.inputs = {"scene": str(scene)}
    left, right = _read_pgm(scene / "left.pgm"), _read_pgm(scene / "right.pgm")
    try:
        sizes = [float(s) for s in args.sizes.split(",")]
    except ValueError:
        raise InputError(f"bad --sizes {args.sizes!r}") from None
    with run.stage("sweep"):
        try:
            rows = bssa.grid_quality_sweep(
                left, right, sizes, p["max_disp"], p["block"], bssa.RefineParams(lam=p["lambda"])
            )
        except ValueError as exc:
            raise InputError(str(exc)) from None
    run.write_csv(
        "sweep.csv",
        ["size", "vertices", "ms_ssim", "refine_ms"],
        [(f"{r.size:g}", r.vertex_count, f"{r.ms_ssim:.6f}", f"{r.refine_time * 1e3:.3f}") for r in rows],
    )
    run.finish()
    for r in rows:
        print(f"size {r.size:>4g}: {r.vertex_count:>7d} vertices, MS-SSIM {r.ms_ssim:.4f}, {r.refine_time * 1e3:.1f} ms")
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="incam", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"incam {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, default=0, help="recorded in the manifest; all commands are deterministic")
        p.add_argument("-v", "--verbose", action="store_true")

    f = sub.add_parser("face", help="motion -> face detection -> NN authentication over a frame directory")
    f.add_argument("frames", nargs="?", default=str(data_path("face_frames")), help="directory of numbered PGM frames")
    f.add_argument("--cascade", default=str(data_path("toy_cascade.json")), help="cascade JSON")
    f.add_argument("--mlp", default=str(data_path("auth_mlp.json")), help="authentication MLP JSON")
    f.add_argument("--pipeline", default=str(data_path("face_pipeline.json")), help="block costs and link for the energy model")
    f.add_argument("--bits", type=int, choices=(4, 8, 16), default=8, help="fixed-point datapath width")
    f.add_argument("--pes", type=int, default=8, help="accelerator processing elements")
    f.add_argument("--no-filters", action="store_true", help="run the NN on every frame")
    f.add_argument("--threshold", type=float, default=0.5, help="NN score needed to authenticate")
    f.add_argument("--pixel-thresh", type=float, default=20, help="luma change that marks a pixel as moved")
    f.add_argument("--area-frac", type=float, default=0.01, help="fraction of moved pixels that counts as motion")
    f.add_argument("--scale-factor", type=float, default=1.25, help="window growth per detection scale")
    common(f)
    f.set_defaults(func=run_face)

    s = sub.add_parser("stereo", help="rough SAD disparity refined in a bilateral grid")
    s.add_argument("left", nargs="?", default=str(data_path("stereo", "left.pgm")))
    s.add_argument("right", nargs="?", default=str(data_path("stereo", "right.pgm")))
    s.add_argument("--sidecar", default=None, help="JSON with max_disp, block, sigma_spatial, sigma_range, lambda (default: stereo.json beside LEFT)")
    s.add_argument("--max-disp", type=int, default=None, help="largest disparity searched")
    s.add_argument("--block", type=int, default=None, help="SAD block side (odd)")
    s.add_argument("--grid-size", type=float, default=None, help="pixels per grid vertex (spatial)")
    s.add_argument("--sigma-range", type=float, default=None, help="luma levels per grid vertex")
    s.add_argument("--lambda", dest="lam", type=float, default=None, help="smoothness weight")
    s.add_argument("--ground-truth", default=None, help="disparity PGM to score against (default: the sidecar's ground_truth entry)")
    s.add_argument("--emit-fixture", action="store_true", help="also write a measured pipeline cost fixture")
    common(s)
    s.set_defaults(func=run_stereo)

    a = sub.add_parser("analyze", help="enumerate offload configurations and flag those meeting an FPS target")
    a.add_argument("pipeline", nargs="?", default=str(data_path("vr_pipeline.json")), help="pipeline JSON")
    a.add_argument("--fps-threshold", type=float, default=30.0, help="frame rate a configuration must sustain")
    a.add_argument("--bandwidth-bps", type=float, default=None, help="override the link bandwidth")
    common(a)
    a.set_defaults(func=run_analyze)

    w = sub.add_parser("sweep", help="depth quality vs. bilateral grid size")
    w.add_argument("scene", nargs="?", default=str(data_path("stereo")), help="directory with left.pgm, right.pgm and optional stereo.json")
    w.add_argument("--sizes", default="4,8,16,32,64", help="comma-separated pixels-per-vertex values")
    w.add_argument("--max-disp", type=int, default=None)
    w.add_argument("--block", type=int, default=None)
    w.add_argument("--grid-size", type=float, default=None, help=argparse.SUPPRESS)
    w.add_argument("--sigma-range", type=float, default=None, help=argparse.SUPPRESS)
    w.add_argument("--lambda", dest="lam", type=float, default=None)
    common(w)
    w.set_defaults(func=run_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"incam {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
