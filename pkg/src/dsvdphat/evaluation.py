"""Angle error, threshold confusion counts, ROC/AUC, condition sweeps and
per-frame timing."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from dsvdphat.errors import DomainError

log = logging.getLogger(__name__)

METHODS = ("dsvd-phat", "svd-phat", "gsvd-music")


@dataclass(frozen=True)
class EvalRecord:
    frame_index: int
    method: str
    grid_index: int
    direction: np.ndarray
    amplitude: float
    true_doa: np.ndarray
    theta: float


def angle_error(est, truth) -> float:
    """Angle in radians between two unit vectors, in [0, pi]."""
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    for v in (est, truth):
        if v.shape != (3,) or abs(np.linalg.norm(v) - 1) > 1e-6:
            raise DomainError(f"expected a unit 3-vector, got {v!r}")
    return float(np.arccos(np.clip(est @ truth, -1.0, 1.0)))


def make_records(estimates, true_doa, method: str, skip: int = 0) -> tuple[list[EvalRecord], int]:
    """Records for ``estimates[skip:]``; returns ``(records, n_without_estimate)``."""
    out, missing = [], 0
    for est in estimates[skip:]:
        if est is None:
            missing += 1
            continue
        out.append(EvalRecord(est.frame_index, method, est.grid_index, est.direction,
                              est.amplitude, true_doa, angle_error(est.direction, true_doa)))
    return out, missing


def _arrays(records):
    theta = np.array([r.theta for r in records], dtype=np.float64)
    amp = np.array([r.amplitude for r in records], dtype=np.float64)
    return theta, amp


def confusion_counts(records, delta_theta: float, t_min: float) -> tuple[int, int, int, int]:
    """(TP, TN, FP, FN) with accuracy ``theta <= delta_theta`` and acceptance ``e >= t_min``."""
    if not 0 <= delta_theta <= np.pi / 2:
        raise DomainError("delta_theta must lie in [0, pi/2]")
    theta, amp = _arrays(records)
    good = theta <= delta_theta
    accepted = amp >= t_min
    tp = int(np.sum(good & accepted))
    tn = int(np.sum(~good & ~accepted))
    fp = int(np.sum(~good & accepted))
    fn = int(np.sum(good & ~accepted))
    return tp, tn, fp, fn


@dataclass
class RocCurve:
    points: list  # (t_min, tpr, fpr), thresholds decreasing
    auc: float
    n_positive: int
    n_negative: int

    @property
    def defined(self) -> bool:
        return self.n_positive > 0 and self.n_negative > 0


def roc_from_arrays(theta: np.ndarray, amp: np.ndarray, delta_theta: float, thresholds=None) -> RocCurve:
    good = np.asarray(theta) <= delta_theta
    amp = np.asarray(amp, dtype=np.float64)
    n_pos, n_neg = int(good.sum()), int((~good).sum())
    if thresholds is None:
        thresholds = np.concatenate([[np.inf], np.unique(amp)[::-1], [-np.inf]])
    else:
        thresholds = np.sort(np.asarray(thresholds, dtype=np.float64))[::-1]
        thresholds = np.concatenate([[np.inf], thresholds[np.isfinite(thresholds)], [-np.inf]])
    # accepted counts per threshold via sorted amplitudes
    pos_sorted = np.sort(amp[good])
    neg_sorted = np.sort(amp[~good])
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, thresholds, side="left")
    with np.errstate(invalid="ignore", divide="ignore"):
        tpr = tp / n_pos if n_pos else np.full(len(thresholds), np.nan)
        fpr = fp / n_neg if n_neg else np.full(len(thresholds), np.nan)
    points = list(zip(thresholds.tolist(), np.atleast_1d(tpr).tolist(), np.atleast_1d(fpr).tolist()))
    if n_pos and n_neg:
        auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    else:
        auc = math.nan
    return RocCurve(points, auc, n_pos, n_neg)


def roc(records, delta_theta: float = 0.2, thresholds=None) -> RocCurve:
    """Sweep ``t_min`` over the unique amplitudes (plus +-inf) and integrate by trapezoids.

    The AUC is NaN when only one class is present.
    """
    theta, amp = _arrays(records)
    if len(theta) == 0:
        raise ValueError("no records")
    return roc_from_arrays(theta, amp, delta_theta, thresholds)


# --- condition sweep ------------------------------------------------------------

@dataclass
class AucCell:
    snr_db: float
    rt60: float
    method: str
    auc: float
    n_records: int
    n_excluded: int
    n_scenarios_ok: int
    n_scenarios: int
    n_accurate: int = 0  # records within delta_theta (ROC positives)

    @property
    def single_class(self) -> bool:
        """No positives or no negatives: the AUC is undefined."""
        return self.n_records > 0 and self.n_accurate in (0, self.n_records)

    @property
    def complete(self) -> bool:
        return self.n_scenarios_ok >= 0.8 * self.n_scenarios


@dataclass
class AucTable:
    cells: list = field(default_factory=list)
    rocs: dict = field(default_factory=dict)  # (snr_db, rt60, method) -> RocCurve

    def get(self, snr_db, rt60, method) -> AucCell:
        for c in self.cells:
            if c.snr_db == snr_db and c.rt60 == rt60 and c.method == method:
                return c
        raise KeyError((snr_db, rt60, method))

    @property
    def methods(self):
        return list(dict.fromkeys(c.method for c in self.cells))

    def to_csv(self) -> str:
        lines = ["snr_db,rt60_ms,method,auc,n_records,n_accurate,n_excluded,scenarios_ok,scenarios,complete"]
        for c in self.cells:
            lines.append(
                f"{c.snr_db:g},{round(c.rt60 * 1000):d},{c.method},{c.auc:.4f},{c.n_records},{c.n_accurate},"
                f"{c.n_excluded},{c.n_scenarios_ok},{c.n_scenarios},{int(c.complete)}"
            )
        return "\n".join(lines) + "\n"

    def roc_csv(self) -> str:
        lines = ["snr_db,rt60_ms,method,t_min,tpr,fpr"]
        for (snr, rt60, m), curve in self.rocs.items():
            for t, tpr, fpr in curve.points:
                lines.append(f"{snr:g},{round(rt60 * 1000):d},{m},{t:.9g},{tpr:.6f},{fpr:.6f}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        methods = self.methods
        snrs = list(dict.fromkeys(c.snr_db for c in self.cells))
        rts = list(dict.fromkeys(c.rt60 for c in self.cells))
        head = f"{'SNR (dB)':>8} | {'RT60 (ms)':>9} | " + " | ".join(f"{m:>10}" for m in methods)
        lines = [head, "-" * len(head)]
        for s in snrs:
            for r in rts:
                vals = []
                for m in methods:
                    c = self.get(s, r, m)
                    mark = "" if c.complete else "*"
                    if c.single_class:
                        vals.append(f"{'all ok' if c.n_accurate else 'none ok':>9}{mark or ' '}")
                    else:
                        vals.append(f"{c.auc:>9.2f}{mark or ' '}")
                lines.append(f"{s:>8g} | {round(r * 1000):>9d} | " + " | ".join(vals))
        if any(not c.complete for c in self.cells):
            lines.append("* fewer than 80% of scenarios succeeded")
        if any(c.single_class for c in self.cells):
            lines.append("all ok / none ok: every / no frame within the DOA tolerance, so the AUC is undefined")
        return "\n".join(lines) + "\n"


@lru_cache(maxsize=4)
def _pipeline(cfg):
    """Offline artefacts shared by every scene: index, steering bank, noise matrix."""
    from dsvdphat.correlation import estimate_noise
    from dsvdphat.dsvd import build_index
    from dsvdphat.geometry import build_steering_matrix
    from dsvdphat.music import build_steering_bank
    from dsvdphat.signals import fan_noise
    from dsvdphat.stft import stft_array

    geom = cfg.geometry_obj()
    grid = cfg.grid_obj(geom)
    W = build_steering_matrix(geom, grid, cfg.stft.frame_size)
    index = build_index(W, cfg.dsvd.delta, cfg.dsvd.backend)
    bank = build_steering_bank(geom, grid, cfg.stft.frame_size)
    rec = fan_noise(cfg.sim.noise_recording_s, geom, np.random.default_rng([cfg.sim.seed, 1]),
                    **cfg.sim.noise_kwargs())
    rnn = estimate_noise(stft_array(rec, cfg.stft.frame_size, cfg.stft.hop_size, cfg.stft.window), cfg.dsvd.alpha)
    return geom, grid, index, bank, rnn


def make_localizer(method: str, index, bank, rnn, cfg):
    from dsvdphat.dsvd import DsvdPhatLocalizer
    from dsvdphat.music import GsvdMusicLocalizer

    if method == "dsvd-phat":
        return DsvdPhatLocalizer(index, rnn, cfg.dsvd.alpha)
    if method == "svd-phat":
        return DsvdPhatLocalizer(index, None, cfg.dsvd.alpha)
    if method == "gsvd-music":
        return GsvdMusicLocalizer(bank, rnn, cfg.dsvd.alpha, cfg.music.n_sources,
                                  cfg.music.reg, cfg.music_bins(), cfg.music.subspace)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def _scenario_job(args):
    """Render one placement at every SNR and localize with every method."""
    from dsvdphat.signals import fan_noise, source_signal
    from dsvdphat.simroom import generate_rir, render_scene
    from dsvdphat.stft import stft_array

    cfg, rt60, scenario, snr_list, methods = args
    geom, grid, index, bank, rnn = _pipeline(cfg)
    fs = geom.sample_rate
    out = {}
    rir = generate_rir(scenario.room, geom, fractional=cfg.sim.fractional_delay)
    src = source_signal(scenario.source_index, cfg.sim.utterance_s, fs, cfg.sim.seed + scenario.room.seed,
                        cfg.sim.corpus or None)
    n = len(src) + rir.taps.shape[1] - 1
    noise = fan_noise(n / fs + 0.5, geom, np.random.default_rng([scenario.noise_seed, 2]),
                      **cfg.sim.noise_kwargs())
    skip = cfg.eval.warmup_frames(cfg.dsvd.alpha)
    for snr in snr_list:
        scene = render_scene(rir, src, noise, snr, seed=scenario.noise_seed, sample_rate=fs)
        spec = stft_array(scene.signal.samples, cfg.stft.frame_size, cfg.stft.hop_size, cfg.stft.window)
        for m in methods:
            loc = make_localizer(m, index, bank, rnn, cfg)
            recs, missing = make_records(loc.process(spec), scene.true_doa, m, skip)
            theta, amp = _arrays(recs)
            out[(snr, m)] = (theta, amp, missing)
    return out


def run_condition_grid(cfg, methods=METHODS, snr_list=None, rt60_list=None, n_scenarios=None,
                       seed=None, jobs: int = 1) -> AucTable:
    """Pool post-warm-up frames over ``n_scenarios`` placements per (SNR, RT60)
    and compute one AUC per method.

    Placements are drawn per RT60 and shared across SNRs. Frames without an
    estimate are excluded and counted.
    """
    from dataclasses import replace

    from dsvdphat.simroom import calibrated_reflection, sample_scenarios

    snr_list = list(cfg.sim.snr_list if snr_list is None else snr_list)
    rt60_list = list(cfg.sim.rt60_list if rt60_list is None else rt60_list)
    n_scenarios = cfg.eval.n_scenarios if n_scenarios is None else n_scenarios
    if seed is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, seed=seed))
    seed = cfg.sim.seed
    pole = cfg.pole()
    jobs_args = []
    for ri, rt60 in enumerate(rt60_list):
        scen = sample_scenarios(n_scenarios, math.nan, rt60, seed * 1000 + ri,
                                cfg.sim.room_dimensions, cfg.sim.wall_margin, cfg.sim.min_distance, pole)
        for s in scen:
            jobs_args.append((cfg, rt60, s, snr_list, tuple(methods)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_safe_job, jobs_args))
    else:
        results = [_safe_job(a) for a in jobs_args]

    table = AucTable()
    for rt60 in rt60_list:
        res = [r for a, r in zip(jobs_args, results) if a[1] == rt60]
        ok = [r for r in res if r is not None]
        for snr in snr_list:
            for m in methods:
                theta = np.concatenate([r[(snr, m)][0] for r in ok]) if ok else np.zeros(0)
                amp = np.concatenate([r[(snr, m)][1] for r in ok]) if ok else np.zeros(0)
                missing = sum(r[(snr, m)][2] for r in ok)
                auc = math.nan
                if len(theta):
                    curve = roc_from_arrays(theta, amp, cfg.eval.delta_theta)
                    table.rocs[(snr, rt60, m)] = curve
                    auc = curve.auc
                n_acc = int(np.sum(theta <= cfg.eval.delta_theta))
                table.cells.append(AucCell(snr, rt60, m, auc, len(theta), missing, len(ok), len(res), n_acc))
    return table


def _safe_job(args):
    try:
        return _scenario_job(args)
    except Exception:  # noqa: BLE001 - one bad scene must not sink the sweep
        log.exception("scenario failed (rt60=%s, source=%s)", args[1], args[2].source_index)
        return None


# --- timing ---------------------------------------------------------------------

def bench_per_frame(localizers: dict, frames: np.ndarray, warmup_frames: int = 20, repeats: int = 3,
                    offline_seconds: dict | None = None) -> dict:
    """Online wall time per frame for each localizer over the same frames.

    ``localizers`` maps a method name to a zero-argument factory. Each repeat
    starts a fresh localizer; the first ``warmup_frames`` are run but not timed.
    """
    report = {"frames_timed": int(max(0, len(frames) - warmup_frames)), "repeats": repeats, "methods": {}}
    for name, factory in localizers.items():
        per_frame = []
        for _ in range(repeats):
            loc = factory()
            for l in range(min(warmup_frames, len(frames))):
                loc.step(frames[l], l)
            for l in range(warmup_frames, len(frames)):
                t0 = time.perf_counter()
                loc.step(frames[l], l)
                per_frame.append(time.perf_counter() - t0)
        per_frame = np.array(per_frame)
        report["methods"][name] = {
            "mean_ms": float(per_frame.mean() * 1e3) if len(per_frame) else math.nan,
            "median_ms": float(np.median(per_frame) * 1e3) if len(per_frame) else math.nan,
            "p95_ms": float(np.percentile(per_frame, 95) * 1e3) if len(per_frame) else math.nan,
        }
    if offline_seconds:
        report["offline_s"] = {k: float(v) for k, v in offline_seconds.items()}
    return report
