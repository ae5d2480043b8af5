"""Command-line entry point: build-index, simulate, localize, evaluate, bench.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure
(including a failed acceptance assertion in ``evaluate``).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from dsvdphat.config import load_config, override, to_ini
from dsvdphat.errors import ConfigError

log = logging.getLogger("dsvdphat")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config(args):
    cfg = load_config(args.config)
    if args.set:
        cfg = override(cfg, args.set)
    if args.seed is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, seed=args.seed))
    return cfg


def _offline(cfg):
    from dsvdphat.dsvd import build_index
    from dsvdphat.geometry import build_steering_matrix

    geom = cfg.geometry_obj()
    grid = cfg.grid_obj(geom)
    t0 = time.perf_counter()
    W = build_steering_matrix(geom, grid, cfg.stft.frame_size)
    index = build_index(W, cfg.dsvd.delta, cfg.dsvd.backend)
    return index, time.perf_counter() - t0


def cmd_build_index(args) -> int:
    from dsvdphat.dsvd import save_index

    cfg = _config(args)
    index, secs = _offline(cfg)
    save_index(args.out, index)
    print(f"Q = {index.W.shape[0]}, P(N/2+1) = {index.W.shape[1]}")
    print(f"K = {index.K} (delta = {cfg.dsvd.delta:g})")
    print(f"energy ratio = {index.energy_ratio:.8f}")
    print(f"build time = {secs:.2f} s")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from dsvdphat.correlation import estimate_noise, save_correlation
    from dsvdphat.signals import fan_noise, source_signal
    from dsvdphat.simroom import generate_rir, render_scene, sample_scenarios
    from dsvdphat.stft import MultichannelSignal, stft_array, write_wav

    cfg = _config(args)
    geom = cfg.geometry_obj()
    fs = geom.sample_rate
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.sim.seed
    rec = fan_noise(cfg.sim.noise_recording_s, geom, np.random.default_rng([seed, 1]), **cfg.sim.noise_kwargs())
    write_wav(out / "noise.wav", MultichannelSignal(rec, fs))
    rnn = estimate_noise(stft_array(rec, cfg.stft.frame_size, cfg.stft.hop_size, cfg.stft.window), cfg.dsvd.alpha)
    save_correlation(out / "noise.json", rnn)
    manifest = {"sample_rate": fs, "noise_wav": "noise.wav", "noise_correlation": "noise.json", "scenes": []}
    scen = sample_scenarios(args.n, args.snr, args.rt60, seed, cfg.sim.room_dimensions,
                            cfg.sim.wall_margin, cfg.sim.min_distance, cfg.pole(geom))
    for s in scen:
        rir = generate_rir(s.room, geom, fractional=cfg.sim.fractional_delay)
        src = source_signal(s.source_index, cfg.sim.utterance_s, fs, seed + s.room.seed, cfg.sim.corpus or None)
        n = len(src) + rir.taps.shape[1] - 1
        noise = fan_noise(n / fs + 0.5, geom, np.random.default_rng([s.noise_seed, 2]), **cfg.sim.noise_kwargs())
        scene = render_scene(rir, src, noise, args.snr, seed=s.noise_seed, sample_rate=fs)
        name = f"scene_{s.source_index:03d}.wav"
        peak = float(np.max(np.abs(scene.signal.samples)))
        scale = 0.99 / peak if peak > 0.99 else 1.0
        write_wav(out / name, MultichannelSignal(scene.signal.samples * scale, fs))
        manifest["scenes"].append({
            "file": name,
            "true_doa": [float(v) for v in scene.true_doa],
            "snr_db": float(args.snr),
            "rt60": float(args.rt60),
            "seed": int(s.room.seed),
            "noise_seed": int(s.noise_seed),
            "active_span": [int(v) for v in scene.active_span],
            "array_center": list(s.room.array_center),
            "source_position": list(s.room.source_position),
            "gain": scale,
        })
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(scen)} scenes, noise recording and manifest to {out}")
    return EXIT_OK


def cmd_localize(args) -> int:
    from dsvdphat.correlation import CorrelationSet, load_correlation
    from dsvdphat.dsvd import load_index
    from dsvdphat.evaluation import METHODS, make_localizer
    from dsvdphat.music import build_steering_bank
    from dsvdphat.stft import read_wav, stft_array

    if args.method not in METHODS:
        raise UsageError(f"unknown method {args.method!r}; choose from {', '.join(METHODS)}")
    cfg = _config(args)
    geom = cfg.geometry_obj()
    sig = read_wav(args.wav, geom.n_mics)
    if sig.sample_rate != geom.sample_rate:
        raise ConfigError(f"{args.wav}: sample rate {sig.sample_rate} != configured {geom.sample_rate}")
    spec = stft_array(sig.samples, cfg.stft.frame_size, cfg.stft.hop_size, cfg.stft.window)
    n_bins = cfg.stft.frame_size // 2 + 1
    if args.method == "svd-phat":
        rnn = CorrelationSet.zeros(geom.n_mics, n_bins, cfg.dsvd.alpha)
    else:
        if not args.noise:
            raise UsageError(f"--noise is required for {args.method}")
        rnn = load_correlation(args.noise)
        if rnn.matrices.shape != (n_bins, geom.n_mics, geom.n_mics):
            raise ConfigError(f"noise sidecar shape {rnn.matrices.shape} does not match the config")
    index = load_index(args.index) if args.index else _offline(cfg)[0]
    grid = index.W.grid
    bank = build_steering_bank(geom, grid, cfg.stft.frame_size) if args.method == "gsvd-music" else None
    loc = make_localizer(args.method, index, bank, rnn, cfg)
    rows = []
    for l, frame in enumerate(spec):
        est = loc.step(frame, l)
        if est is None:
            rows.append((l, -1, math.nan, math.nan, math.nan, math.nan))
        else:
            d = est.direction
            rows.append((l, est.grid_index, d[0], d[1], d[2], est.amplitude))
    header = "frame,grid_index,x,y,z,amplitude"
    lines = [header] + [f"{l},{q},{x:.6f},{y:.6f},{z:.6f},{e:.9g}" for l, q, x, y, z, e in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        if str(args.out).endswith(".json"):
            keys = header.split(",")
            Path(args.out).write_text(json.dumps([dict(zip(keys, r)) for r in rows], indent=1) + "\n")
        else:
            Path(args.out).write_text(text)
        print(f"wrote {len(rows)} estimates to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _check_assertions(cfg, table) -> list[str]:
    failures = []
    snr_hi, rt_lo = max(c.snr_db for c in table.cells), min(c.rt60 for c in table.cells)
    if math.isfinite(cfg.eval.min_best_auc):
        auc = table.get(snr_hi, rt_lo, "dsvd-phat").auc
        if not auc >= cfg.eval.min_best_auc:
            failures.append(f"dsvd-phat AUC {auc:.3f} at {snr_hi:g} dB / {rt_lo * 1000:g} ms "
                            f"< {cfg.eval.min_best_auc}")
    if math.isfinite(cfg.eval.min_dsvd_gain) and "svd-phat" in table.methods:
        for c in table.cells:
            if c.method != "dsvd-phat":
                continue
            base = table.get(c.snr_db, c.rt60, "svd-phat").auc
            if not c.auc - base >= cfg.eval.min_dsvd_gain:
                failures.append(f"dsvd-phat gain {c.auc - base:.3f} over svd-phat at {c.snr_db:g} dB / "
                                f"{c.rt60 * 1000:g} ms < {cfg.eval.min_dsvd_gain}")
    return failures


def cmd_evaluate(args) -> int:
    from dsvdphat.evaluation import METHODS, run_condition_grid

    cfg = _config(args)
    methods = tuple(args.methods.split(",")) if args.methods else METHODS
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}")
    table = run_condition_grid(cfg, methods, n_scenarios=args.n, jobs=args.jobs)
    text = table.to_text()
    print(text, end="")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "auc.csv").write_text(table.to_csv())
        (out / "auc.txt").write_text(text)
        (out / "roc.csv").write_text(table.roc_csv())
        (out / "config.ini").write_text(to_ini(cfg))
        print(f"wrote auc.csv, auc.txt, roc.csv, config.ini to {out}")
    failures = _check_assertions(cfg, table)
    for f in failures:
        print(f"ASSERTION FAILED: {f}")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_bench(args) -> int:
    from dsvdphat.evaluation import _pipeline, bench_per_frame, make_localizer
    from dsvdphat.music import build_steering_bank
    from dsvdphat.signals import fan_noise, source_signal
    from dsvdphat.simroom import generate_rir, render_scene, sample_scenarios
    from dsvdphat.stft import stft_array

    cfg = _config(args)
    index, build_s = _offline(cfg)
    geom, grid = cfg.geometry_obj(), index.W.grid
    t0 = time.perf_counter()
    bank = build_steering_bank(geom, grid, cfg.stft.frame_size)
    bank_s = time.perf_counter() - t0
    rnn = _pipeline(cfg)[4]
    s = sample_scenarios(1, 10.0, 0.2, cfg.sim.seed, cfg.sim.room_dimensions, cfg.sim.wall_margin,
                         cfg.sim.min_distance, cfg.pole(geom))[0]
    rir = generate_rir(s.room, geom, fractional=cfg.sim.fractional_delay)
    src = source_signal(0, args.seconds, geom.sample_rate, cfg.sim.seed, cfg.sim.corpus or None)
    n = len(src) + rir.taps.shape[1] - 1
    noise = fan_noise(n / geom.sample_rate + 0.5, geom, np.random.default_rng([s.noise_seed, 2]),
                      **cfg.sim.noise_kwargs())
    scene = render_scene(rir, src, noise, 10.0, seed=s.noise_seed, sample_rate=geom.sample_rate)
    frames = stft_array(scene.signal.samples, cfg.stft.frame_size, cfg.stft.hop_size, cfg.stft.window)
    factories = {m: (lambda m=m: make_localizer(m, index, bank, rnn, cfg)) for m in ("dsvd-phat", "gsvd-music")}
    report = bench_per_frame(factories, frames, cfg.eval.warmup_frames(cfg.dsvd.alpha), args.repeats,
                             {"dsvd-phat": build_s, "gsvd-music": bank_s})
    dsvd, music = report["methods"]["dsvd-phat"], report["methods"]["gsvd-music"]
    report["speedup_mean"] = music["mean_ms"] / dsvd["mean_ms"]
    report["realtime_budget_ms"] = 1e3 * cfg.stft.hop_size / geom.sample_rate
    report["K"] = index.K
    for m, r in report["methods"].items():
        print(f"{m:>11}: mean {r['mean_ms']:.4f} ms, median {r['median_ms']:.4f} ms per frame")
    print(f"speed-up (mean): {report['speedup_mean']:.1f}x; budget {report['realtime_budget_ms']:.1f} ms/frame")
    print(f"offline: index build {build_s:.2f} s, steering bank {bank_s:.2f} s")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file (defaults reproduce the reference setup)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
    common.add_argument("--seed", type=int, help="override sim.seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="dsvdphat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build-index", parents=[common], help="build and save the offline SVD index")
    b.add_argument("--out", default="index.dsvd")
    b.set_defaults(func=cmd_build_index)

    s = sub.add_parser("simulate", parents=[common], help="render scenes, a noise recording and a manifest")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--snr", type=float, default=20.0)
    s.add_argument("--rt60", type=float, default=0.0)
    s.set_defaults(func=cmd_simulate)

    loc = sub.add_parser("localize", parents=[common], help="localize every frame of a multichannel WAV")
    loc.add_argument("wav")
    loc.add_argument("--method", default="dsvd-phat")
    loc.add_argument("--noise", help="noise correlation sidecar (.json or .npz)")
    loc.add_argument("--index", help="prebuilt index file (built from the config if omitted)")
    loc.add_argument("--out", help="CSV or .json output (stdout if omitted)")
    loc.set_defaults(func=cmd_localize)

    e = sub.add_parser("evaluate", parents=[common], help="AUC grid over SNR x RT60")
    e.add_argument("--out-dir")
    e.add_argument("--n", type=int, help="scenarios per condition (default: eval.n_scenarios)")
    e.add_argument("--methods", help="comma-separated subset of methods")
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(func=cmd_evaluate)

    t = sub.add_parser("bench", parents=[common], help="online per-frame timing")
    t.add_argument("--seconds", type=float, default=4.0)
    t.add_argument("--repeats", type=int, default=3)
    t.add_argument("--out")
    t.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
