"""``fpacs`` command-line front end.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure,
4 I/O failure.  Output directories default to ``$FPACS_OUTPUT_ROOT/<command>``
(or ``./fpacs-out/<command>``) and always end up with a ``manifest.txt``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, io
from .analysis import compression_factor, make_chart, make_moving_scene, mtf_curve, rate_report
from .analysis.rates import REPORTED_ROUNDED
from .analysis.sweeps import compression_sweep, noise_sweep
from .calib import calibration_error, estimate_map, run_calibration, save_run
from .config import ExperimentConfig, default_output_root, load
from .errors import CalibrationError, ConfigError, DimensionError, FormatError, SolverError
from .model import GeometryConfig, build_map, simulate_capture, stack
from .patterns import make_sequence
from .recon import SolverConfig, TvKind, solve

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

logger = logging.getLogger("fpacs")


def _versions() -> dict:
    return {"version.fpacs": __version__, "version.numpy": np.__version__, "version.scipy": scipy.__version__}


def _out_dir(args, cfg: ExperimentConfig | None, command: str) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.raw["output"]["dir"]:
        return cfg.output_dir
    return default_output_root() / command


def _config(args, require_patterns: bool = True) -> ExperimentConfig:
    return load(args.config, args.set, require_patterns=require_patterns)


def build_scene(cfg: ExperimentConfig, T: int) -> np.ndarray:
    s, g = cfg.scene, cfg.geometry
    if s.kind == "bars":
        return make_chart(g, "bars", frequency=s.frequency)
    if s.kind == "checker":
        return make_chart(g, "checker", size=s.size)
    if s.kind == "usaf-like":
        return make_chart(g, "usaf-like")
    if s.kind == "moving":
        frames = s.frames if s.frames > 1 else T
        if frames != T:
            raise ConfigError(f"scene.frames ({frames}) must equal the pattern count ({T}) for video")
        size = s.object_size
        vr, vc = s.velocity
        start = (0 if vr >= 0 else g.dmd_rows - size, 0 if vc >= 0 else g.dmd_cols - size)
        if vr == 0:
            start = ((g.dmd_rows - size) // 2, start[1])
        return make_moving_scene(g, size, (vr, vc), frames, start=start)
    raise ConfigError(f"scene.kind: unknown scene {s.kind!r}")


def _sequence(cfg: ExperimentConfig):
    p = cfg.patterns
    return make_sequence(p.kind, cfg.geometry, p.count, density=p.density, seed=cfg.seed, groups=p.groups)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg, "simulate")
    out.mkdir(parents=True, exist_ok=True)
    seq = _sequence(cfg)
    scene = build_scene(cfg, len(seq))
    smap = build_map(cfg.geometry, cfg.optics)
    y = simulate_capture(smap, seq, scene, cfg.noise)
    io.write_patterns(out / "patterns.fpat", seq)
    io.write_map(out / "map.fpcs", smap)
    for t, frame in enumerate(y):
        io.write_fpfr(out / f"sensor_{t:05d}.fpfr", frame)
    frames = scene if scene.ndim == 3 else scene[None]
    for t, frame in enumerate(frames):
        io.write_fpfr(out / f"scene_{t:05d}.fpfr", frame)
    digest = io.write_manifest(out, {**cfg.flat(), **_versions(), "kind": "capture",
                                     "captures": len(seq), "scene_frames": frames.shape[0]})
    print(f"wrote {len(seq)} captures to {out} (content {digest[:12]})")
    return EXIT_OK


def _load_capture(directory: Path):
    m = io.read_manifest(directory)
    if m.get("kind") != "capture":
        raise ConfigError(f"{directory} is not a capture directory")
    geometry = GeometryConfig(int(m["geometry.sensor_rows"]), int(m["geometry.sensor_cols"]),
                              int(m["geometry.block_rows"]), int(m["geometry.block_cols"]),
                              float(m["geometry.f_dmd"]))
    smap = io.read_map(directory / "map.fpcs", geometry.sensor_shape, geometry.dmd_shape)
    seq = io.read_patterns(directory / "patterns.fpat")
    y = np.stack([io.read_fpfr(directory / f"sensor_{t:05d}.fpfr") for t in range(int(m["captures"]))])
    scene = np.stack([io.read_fpfr(directory / f"scene_{t:05d}.fpfr")
                      for t in range(int(m["scene_frames"]))])
    return m, geometry, smap, seq, y, scene


def _solver_from(m: dict, args) -> SolverConfig:
    step = m.get("solver.step", "auto")
    cfg = {
        "lam": float(m.get("solver.lam", 1e-4)),
        "max_iters": int(m.get("solver.max_iters", 500)),
        "inner_prox_iters": int(m.get("solver.inner_prox_iters", 15)),
        "tol": float(m.get("solver.tol", 1e-6)),
        "step": step if step == "auto" else float(step),
        "nonneg": m.get("solver.nonneg", "true").lower() in ("1", "true", "yes", "on"),
        "seed": int(m.get("run.seed", 0)),
    }
    for name in ("lam", "max_iters", "inner_prox_iters", "tol"):
        value = getattr(args, name)
        if value is not None:
            cfg[name] = value
    if args.nonneg is not None:
        cfg["nonneg"] = args.nonneg
    return SolverConfig(**cfg)


def cmd_reconstruct(args) -> int:
    src = Path(args.capture_dir)
    m, geometry, smap, seq, y, scene = _load_capture(src)
    kind = TvKind(args.tv)
    frames = args.frames
    if kind is TvKind.TV3D and frames < 2:
        raise ConfigError("--tv 3d needs --frames >= 2; a single-frame capture has no temporal axis")
    solver = _solver_from(m, args)
    system = stack(smap, seq, y, geometry, frame_count=frames)
    result = solve(system, kind, solver)
    out = Path(args.out) if args.out else src.with_name(src.name + "-recon")
    out.mkdir(parents=True, exist_ok=True)
    est = result.estimate if result.estimate.ndim == 3 else result.estimate[None]
    for f, frame in enumerate(est):
        io.write_fpfr(out / f"estimate_{f:05d}.fpfr", frame)
        io.write_pgm16(out / f"estimate_{f:05d}.pgm", frame, 0.0, max(float(scene.max()), 1e-12))
    io.write_csv(out / "objective.csv", ["iteration", "objective", "data_term", "tv_term"],
                 [[k, o, d, t] for k, (o, d, t) in
                  enumerate(zip(result.objective_trace, result.data_trace, result.tv_trace))])
    entries = {**_versions(), "kind": "reconstruction", "tv": kind.value, "frames": frames,
               "iterations_run": result.iterations_run, "converged": result.converged,
               "solver.lam": solver.lam, "solver.max_iters": solver.max_iters,
               "solver.inner_prox_iters": solver.inner_prox_iters, "solver.tol": solver.tol,
               "solver.nonneg": solver.nonneg, "source_content_sha256": m["content_sha256"]}
    if scene.shape[0] in (1, est.shape[0]) and np.any(scene):
        # a static scene is compared with every frame
        ref = np.broadcast_to(scene, est.shape)
        rel = float(np.linalg.norm(est - ref) / np.linalg.norm(ref))
        entries["relative_error"] = repr(rel)
        print(f"relative error {rel:.3e}")
    digest = io.write_manifest(out, entries)
    print(f"{result.iterations_run} iterations, estimate in {out} (content {digest[:12]})")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args, require_patterns=False)
    out = _out_dir(args, cfg, "calibrate")
    out.mkdir(parents=True, exist_ok=True)
    run = run_calibration(cfg.geometry, cfg.optics, cfg.patterns.groups, cfg.noise)
    truth = build_map(cfg.geometry, cfg.optics)
    est = estimate_map(run, args.threshold, truth)
    score = calibration_error(est.map_est, truth)
    io.write_csv(out / "calibration.csv",
                 ["support_precision", "support_recall", "frobenius_rel_error", "n_predicted"],
                 [[score.support_precision, score.support_recall, score.frobenius_rel_error,
                   score.n_predicted]])
    save_run(run, out, est)
    print(f"{len(run.patterns)} captures; recall {score.support_recall:.4f}, "
          f"precision {score.support_precision:.4f}, rel. error {score.frobenius_rel_error:.3e}")
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _snr_list(text: str) -> list:
    try:
        return [None if v.strip().lower() == "none" else float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected SNR values in dB or 'none', got {text!r}") from None


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if (args.T is None) == (args.snr is None):
        raise ConfigError("sweep needs exactly one of --T or --snr")
    out = _out_dir(args, cfg, "sweep")
    plot = out / "plotdata"
    plot.mkdir(parents=True, exist_ok=True)
    scene = build_scene(cfg, 1)
    if scene.ndim != 2:
        raise ConfigError("sweeps use a static scene")
    seeds = [cfg.seed + k for k in range(args.seeds)]
    common = dict(solver_cfg=cfg.solver, seeds=seeds, density=cfg.patterns.density)
    if args.T is not None:
        res = compression_sweep(scene, cfg.geometry, cfg.optics, cfg.patterns.kind, args.T,
                                cfg.noise.snr_db, **common)
        name = "compression.csv"
    else:
        if cfg.patterns.count is None:
            raise ConfigError("patterns.count must be set for a noise sweep")
        res = noise_sweep(scene, cfg.geometry, cfg.optics, cfg.patterns.kind, args.snr,
                          cfg.patterns.count, **common)
        name = "noise.csv"
    res.to_csv(plot / name)
    io.write_fpfr(out / "scene.fpfr", scene)
    io.write_manifest(out, {**cfg.flat(), **_versions(), "kind": "sweep", "axis": res.axis_name,
                            "points": ",".join(str(v) for v in res.axis_values), "seeds": args.seeds})
    for v, p, s in zip(res.axis_values, res.psnr_db, res.ssim):
        print(f"{res.axis_name}={v}: psnr {p:.2f} dB, ssim {s:.4f}")
    return EXIT_OK


def cmd_mtf(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg, "mtf")
    plot = out / "plotdata"
    plot.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.seed + k for k in range(args.seeds)]
    for T in args.T:
        curve = mtf_curve(cfg.geometry, cfg.optics, cfg.patterns.kind, T, args.freqs, cfg.solver,
                          seeds=seeds, snr_db=cfg.noise.snr_db, density=cfg.patterns.density)
        curve.to_csv(plot / f"mtf_T{T}_alpha{curve.alpha:g}.csv")
        print(f"T={T} alpha={curve.alpha:g}: " + " ".join(f"{v:.3f}" for v in curve.mtf))
    io.write_manifest(out, {**cfg.flat(), **_versions(), "kind": "mtf",
                            "T": ",".join(map(str, args.T)),
                            "frequencies": ",".join(repr(f) for f in args.freqs), "seeds": args.seeds})
    return EXIT_OK


def cmd_rates(args) -> int:
    rep = rate_report(args.K, args.fdmd, args.alpha, args.megapixels)
    print(f"M_r = {rep.measurement_rate} samples/s")
    print(f"alpha = {rep.compression_factor}")
    print(f"STR = {rep.str} samples/s")
    if (args.K, args.fdmd, args.alpha) == (64, 480, 16):
        print(f"reported: M_r ~ {REPORTED_ROUNDED['measurement_rate']:g}, "
              f"STR ~ {REPORTED_ROUNDED['str']:g}, {REPORTED_ROUNDED['fps_1mp']} fps at 1 MP")
    for mp, fps in rep.achievable:
        print(f"{mp:g} MP at {fps:.6g} fps")
    if args.T:
        for T in args.T:
            a = compression_factor(args.n_dmd, T, args.K * args.K)
            print(f"T={T}: alpha = {a:.6g} (~{a:.2g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpacs", description="FPA compressive-sensing simulator")
    parser.add_argument("--version", action="version", version=f"fpacs {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", "-c", help="INI experiment file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--out", "-o", help="output directory")
        return p

    p = with_config(sub.add_parser("simulate", help="simulate a coded capture"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="reconstruct a capture directory")
    p.add_argument("capture_dir")
    p.add_argument("--tv", choices=[k.value for k in TvKind], default="2d")
    p.add_argument("--frames", type=int, default=1, help="unknown frames (video mode when > 1)")
    p.add_argument("--lam", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--inner-iters", dest="inner_prox_iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--nonneg", dest="nonneg", action="store_true", default=None)
    p.add_argument("--no-nonneg", dest="nonneg", action="store_false")
    p.add_argument("--out", "-o", help="output directory (default: <capture_dir>-recon)")
    p.set_defaults(func=cmd_reconstruct)

    p = with_config(sub.add_parser("calibrate", help="pixel-scan calibration of the map"))
    p.add_argument("--threshold", type=float, default=0.01, help="support threshold (fraction of column max)")
    p.set_defaults(func=cmd_calibrate)

    p = with_config(sub.add_parser("sweep", help="compression or noise sweep"))
    p.add_argument("--T", type=_int_list, help="pattern counts, e.g. 64,128,256,512")
    p.add_argument("--snr", type=_snr_list, help="SNRs in dB, e.g. 40,30,20,10,none")
    p.add_argument("--seeds", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = with_config(sub.add_parser("mtf", help="MTF curves, one CSV per compression factor"))
    p.add_argument("--T", type=_int_list, required=True)
    p.add_argument("--freqs", type=_float_list, default=[1 / 32, 1 / 16, 1 / 8, 3 / 16, 1 / 4])
    p.add_argument("--seeds", type=int, default=1)
    p.set_defaults(func=cmd_mtf)

    p = sub.add_parser("rates", help="measurement-rate and STR arithmetic")
    p.add_argument("--K", type=int, default=64)
    p.add_argument("--fdmd", type=float, default=480)
    p.add_argument("--alpha", type=float, default=16)
    p.add_argument("--megapixels", type=_float_list, default=[1.0])
    p.add_argument("--T", type=_int_list, help="also tabulate alpha for these pattern counts")
    p.add_argument("--n-dmd", dest="n_dmd", type=int, default=10**6)
    p.set_defaults(func=cmd_rates)
    return parser


def _integral(x):
    return int(x) if float(x).is_integer() else x


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "rates":
        args.fdmd, args.alpha = _integral(args.fdmd), _integral(args.alpha)
    try:
        return args.func(args)
    except (ConfigError, DimensionError, CalibrationError) as exc:
        print(f"fpacs {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"fpacs {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"fpacs {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, ValueError) as exc:
        print(f"fpacs {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
