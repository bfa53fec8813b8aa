"""Monte-Carlo orchestration: scenario grid, per-trial pipeline, CSV output."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import codec
from .channel import (LinkParams, assemble_channel, correlate_channel, draw_correlated_fading,
                      draw_fading, draw_shadowing, transmit)
from .config import ExperimentConfig
from .cooperate import run_comp_round, run_mr_relay_round
from .detect import DetectionProblem, ml_soft, mmse_osic, pda
from .metrics import MetricSeries, raw_throughput, slot_factor
from .powerctl import SirScenario, qos_map, run_power_control
from .topology import build_comp_layout, build_das_layout, select_mr

log = logging.getLogger(__name__)

# detectors that make sense in each mode; anything else requested is skipped
MODE_DETECTORS = {
    "CAS": ("ML", "MMSE-OSIC", "PDA"),
    "CoMP-CAS": ("SC-PDA", "PDA-joint", "PDA"),
    "FFR-DAS": ("ML", "MMSE-OSIC", "PDA"),
    "MR-FFR-DAS": ("SC-PDA", "SC-PDA-prob", "PDA"),
}

BER_COLUMNS = ["preset", "scenario", "mode", "detector", "direction", "d_over_r", "tx_power_dbm",
               "rho", "mr_strategy", "power_control", "population", "trials", "bit_errors",
               "bits_total", "ber", "ber_ci95", "ber_lo", "ber_hi", "packet_errors",
               "packets_total", "per", "slot_factor", "c_eff", "c_eff_one_slot"]
SIR_COLUMNS = ["preset", "scenario", "direction", "d_over_r", "power_control", "trials",
               "sir_mean_db", "sir_median_db", "sir_p10_db", "sir_p90_db", "n_low_regime",
               "sir_low_regime_mean_db", "power_mean_dbm"]


@dataclass(frozen=True)
class Scenario:
    index: int
    mode: str
    direction: str
    d_over_r: float
    tx_power_dbm: float
    rho: float
    mr_strategy: str
    power_control: bool

    def key(self) -> dict:
        return {"mode": self.mode, "direction": self.direction, "d_over_r": self.d_over_r,
                "tx_power_dbm": self.tx_power_dbm, "rho": self.rho,
                "mr_strategy": self.mr_strategy, "power_control": self.power_control}


def scenario_grid(cfg: ExperimentConfig) -> list[Scenario]:
    """Cartesian product of the sweep axes, collapsing axes a mode ignores."""
    out, seen = [], set()
    for mode, direction, dr, p, rho, strat, pc in itertools.product(
            cfg.modes, cfg.directions, cfg.d_over_r, cfg.tx_power_dbm, cfg.rho,
            cfg.mr_strategy, cfg.power_control):
        relay = mode == "MR-FFR-DAS"
        das = mode.endswith("DAS")
        key = (mode, direction if das else "-", dr, p, rho if relay else math.nan,
               strat if relay else "-", bool(pc) and das)
        sig = tuple("nan" if isinstance(v, float) and math.isnan(v) else v for v in key)
        if sig in seen:
            continue
        seen.add(sig)
        out.append(Scenario(len(out), *key))
    return out


def trial_rng(seed: int, scenario: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(scenario, trial)))


def link_params(cfg: ExperimentConfig) -> LinkParams:
    return LinkParams(cfg.pathloss_intercept_db, cfg.pathloss_slope_db, cfg.shadowing_std_db,
                      cfg.noise_psd_dbm_hz, cfg.subcarrier_spacing_hz, cfg.n_subcarriers,
                      cfg.spread_power, cfg.fiber_snr_db, cfg.fiber_scale)


def build_layout(cfg: ExperimentConfig, sc: Scenario, rng):
    R = cfg.cell_radius
    if sc.mode in ("CAS", "CoMP-CAS"):
        return build_comp_layout(R, cfg.n_ra, cfg.n_ms, sc.d_over_r, rng,
                                 cooperative=sc.mode == "CoMP-CAS")
    lay = build_das_layout(R, cfg.n_ra, cfg.n_ms, sc.direction, sc.d_over_r, rng,
                           cfg.cochannel, cfg.ra_ring_fraction, cfg.edge_fraction)
    if sc.mode == "MR-FFR-DAS":
        lay = select_mr(lay, sc.mr_strategy, rng, cfg.vicinity_radius_frac * R,
                        cfg.reliable_radius_frac * R)
    return lay


def controlled_powers(cfg: ExperimentConfig, layout, p0: float) -> np.ndarray:
    scen = SirScenario.from_layout(layout, p0, target_sir=cfg.target_sir_db,
                                   power_bounds=(cfg.p_min_dbm, cfg.p_max_dbm),
                                   slope=cfg.pathloss_slope_db)
    return run_power_control(scen, iterations=cfg.pc_iterations).powers


def _detector_fn(cfg: ExperimentConfig, name: str):
    if name == "ML":
        return lambda p: ml_soft(p, clip=cfg.llr_clip)
    if name == "MMSE-OSIC":
        return lambda p: mmse_osic(p, cfg.llr_clip)
    return lambda p: pda(p, cfg.pda_tol, cfg.pda_max_sweeps, clip=cfg.llr_clip)


def _decode(llrs: np.ndarray, n_coded: int, n_info: int) -> np.ndarray:
    """(n_uses, N_t, 2) symbol LLRs -> (N_t, n_info) decoded bits."""
    per_user = llrs.transpose(1, 0, 2).reshape(llrs.shape[1], -1)[:, :n_coded]
    return codec.viterbi_decode(per_user, n_info)


def draw_frame_fading(n_r, n_t, n_uses, model, rng):
    """Rayleigh coefficients per channel use (``fast``) or one per frame (``block``)."""
    if model == "fast":
        return draw_fading(n_r, n_t, rng, n_uses)
    return np.broadcast_to(draw_fading(n_r, n_t, rng), (n_uses, n_r, n_t)).copy()


def simulate_trial(cfg: ExperimentConfig, sc: Scenario, trial: int, detectors) -> dict:
    """One frame per MS through the full chain; returns decoded bits per detector."""
    rng = trial_rng(cfg.seed, sc.index, trial)
    layout = build_layout(cfg, sc, rng)
    powers = (controlled_powers(cfg, layout, sc.tx_power_dbm) if sc.power_control
              else np.full(layout.n_t, sc.tx_power_dbm))
    params = link_params(cfg)
    n_info = cfg.packet_bits
    info = codec.random_info(rng, layout.n_t, n_info)
    coded = codec.encode(info)
    n_coded = coded.shape[-1]
    x = codec.map_gray_qpsk(codec.pad_to_symbols(coded)).T  # (n_uses, N_t)
    n_uses = x.shape[0]
    backhaul = "wireless" if sc.mode in ("CAS", "CoMP-CAS") else "fiber"
    shadow = draw_shadowing(layout, rng, params)
    fading = draw_frame_fading(layout.n_r, layout.n_t, n_uses, cfg.fading, rng)
    ch1 = assemble_channel(layout, powers, rng, params, n_uses, "ms", backhaul,
                           fading=fading, shadowing_db=shadow)
    out = {}
    if sc.mode == "MR-FFR-DAS":
        if cfg.relay_correlation == "composite":
            fresh = assemble_channel(layout, powers, rng, params, n_uses, "mr", "fiber",
                                     shadowing_db=shadow if cfg.relay_shadowing == "shared" else None)
            ch2 = correlate_channel(ch1, fresh, sc.rho)
        else:
            fading2 = draw_correlated_fading(ch1.fading, sc.rho, rng)
            ch2 = assemble_channel(layout, powers, rng, params, n_uses, "mr", "fiber",
                                   fading=fading2,
                                   shadowing_db=shadow if cfg.relay_shadowing == "shared" else None)
        x_mr = None
        if cfg.mr_error_prob > 0:
            flips = (rng.random(info.shape) < cfg.mr_error_prob).astype(info.dtype)
            x_mr = codec.map_gray_qpsk(codec.pad_to_symbols(codec.encode(info ^ flips))).T
        bundle = run_mr_relay_round(ch1, ch2, x, rng, x_mr, _detector_fn(cfg, "PDA"))
        for name in detectors:
            if name == "PDA":
                llr = bundle.slot1_soft.bit_llrs
            elif name == "SC-PDA":
                llr = bundle.fused_llrs(cfg.llr_clip)
            else:
                llr = bundle.fused("prob").bit_llrs
            out[name] = _decode(llr, n_coded, n_info)
    elif sc.mode == "CoMP-CAS":
        y = transmit(ch1, x, rng)
        det = _detector_fn(cfg, "PDA")
        sc_bundle = None
        if "SC-PDA" in detectors or "PDA" in detectors:
            sc_bundle = run_comp_round(ch1, x, rng, "sc_pda", y=y, detector=det)
        for name in detectors:
            if name == "SC-PDA":
                llr = sc_bundle.fused_llrs(cfg.llr_clip)
            elif name == "PDA-joint":
                llr = run_comp_round(ch1, x, rng, "perfect_joint", y=y, detector=det).bit_llrs
            else:  # home BS only, the first part of the per-BS round
                llr = sc_bundle.parts[0].bit_llrs
            out[name] = _decode(llr, n_coded, n_info)
    else:
        p1 = DetectionProblem.from_channel(ch1, transmit(ch1, x, rng))
        for name in detectors:
            out[name] = _decode(_detector_fn(cfg, name)(p1).bit_llrs, n_coded, n_info)
    return {"info": info, "decoded": out, "wanted": layout.wanted}


def run_batch(args) -> tuple[int, dict]:
    """Worker entry: trials ``[start, stop)`` of one scenario -> counters."""
    cfg, sc, start, stop, detectors = args
    acc = {(d, pop): MetricSeries() for d in detectors for pop in ("wanted", "all")}
    for t in range(start, stop):
        r = simulate_trial(cfg, sc, t, detectors)
        w = r["wanted"]
        for d, bits in r["decoded"].items():
            acc[d, "all"].add_frames(r["info"], bits)
            acc[d, "wanted"].add_frames(r["info"][w], bits[w])
    return sc.index, acc


def git_revision() -> str:
    try:
        return subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                              text=True, cwd=Path(__file__).parent, timeout=5).stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _header(cfg: ExperimentConfig, revision: Optional[str]) -> str:
    rev = git_revision() if revision is None else revision
    return f"# git_revision: {rev}\n" + cfg.header()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)


class _Writer:
    """Serialises rows; the header goes out before any row so partial files parse."""

    def __init__(self, path, cfg, columns, revision):
        self.path = Path(path) if path else None
        self.buf = io.StringIO()
        self.buf.write(_header(cfg, revision))
        self.csv = csv.writer(self.buf, lineterminator="\n")
        self.csv.writerow(columns)

    def rows(self, rows):
        for r in rows:
            self.csv.writerow([_fmt(v) for v in r])

    def flush(self):
        if self.path:
            self.path.write_text(self.buf.getvalue())
        return self.buf.getvalue()


def _ber_rows(cfg, sc: Scenario, acc: dict, trials: int):
    c_raw = raw_throughput(cfg.n_ms, cfg.code_rate, 2, cfg.subcarrier_spacing_hz,
                           cfg.n_subcarriers, cfg.bandwidth_hz)
    for (det, pop), m in acc.items():
        f = slot_factor(sc.mode, enabled=cfg.slot_halving, detector=det)
        iv = m.ber_interval()
        ceff = None if m.ber is None else c_raw * (1 - m.ber) ** cfg.packet_bits
        yield [cfg.preset, sc.index, sc.mode, det, sc.direction, sc.d_over_r, sc.tx_power_dbm,
               sc.rho, sc.mr_strategy, sc.power_control, pop, trials, m.bit_errors, m.bits_total,
               m.ber, m.ci95, iv and iv[0], iv and iv[1], m.packet_errors, m.packets_total, m.per,
               f, None if ceff is None else ceff * f, ceff]


def run_ber(cfg: ExperimentConfig, out=None, revision=None, progress=None) -> str:
    grid = scenario_grid(cfg)
    jobs = {sc.index: [d for d in cfg.detectors if d in MODE_DETECTORS[sc.mode]] for sc in grid}
    acc = {sc.index: {(d, p): MetricSeries() for d in jobs[sc.index] for p in ("wanted", "all")}
           for sc in grid}
    trials = {sc.index: 0 for sc in grid}
    active = [sc for sc in grid if jobs[sc.index]]
    writer = _Writer(out, cfg, BER_COLUMNS, revision)
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        while active:
            tasks = [(cfg, sc, trials[sc.index], trials[sc.index] + cfg.batch_trials, jobs[sc.index])
                     for sc in active]
            results = pool.map(run_batch, tasks) if pool else map(run_batch, tasks)
            for idx, part in results:  # map preserves submission order
                for k, m in part.items():
                    acc[idx][k] = acc[idx][k].merge(m)
                trials[idx] += cfg.batch_trials
            keep = []
            for sc in active:
                series = [m for (d, p), m in acc[sc.index].items() if p == cfg.stop_on]
                if not all(m.done(cfg.min_bits, cfg.min_errors, cfg.max_bits) for m in series):
                    keep.append(sc)
                elif progress:
                    progress(sc, acc[sc.index])
            active = keep
    except KeyboardInterrupt:
        log.warning("interrupted; writing partial results")
        raise
    finally:
        if pool:
            pool.shutdown(cancel_futures=True)
        for sc in grid:
            if jobs[sc.index]:
                writer.rows(_ber_rows(cfg, sc, acc[sc.index], trials[sc.index]))
        text = writer.flush()
    return text


def sir_samples(cfg: ExperimentConfig, direction: str, d_over_r: float, power_control: bool,
                scenario: int, n: Optional[int] = None):
    """Wanted-MS SIR (and power) over sampled layouts of one grid point."""
    n = cfg.sir_trials if n is None else n
    base = np.empty(n)
    ctrl = np.empty(n)
    pw = np.empty(n)
    for t in range(n):
        rng = trial_rng(cfg.seed, scenario, t)
        lay = build_das_layout(cfg.cell_radius, cfg.n_ra, cfg.n_ms, direction, d_over_r, rng,
                               cfg.cochannel, cfg.ra_ring_fraction, cfg.edge_fraction)
        scen = SirScenario.from_layout(lay, cfg.p_min_dbm, target_sir=cfg.target_sir_db,
                                       power_bounds=(cfg.p_min_dbm, cfg.p_max_dbm),
                                       slope=cfg.pathloss_slope_db)
        base[t] = scen.sir()[lay.wanted]
        if power_control:
            res = run_power_control(scen, iterations=cfg.pc_iterations)
            ctrl[t] = res.sir[lay.wanted]
            pw[t] = res.powers[lay.wanted]
        else:
            ctrl[t] = base[t]
            pw[t] = cfg.p_min_dbm
    return base, ctrl, pw


def run_sir(cfg: ExperimentConfig, out=None, revision=None) -> str:
    writer = _Writer(out, cfg, SIR_COLUMNS, revision)
    points = list(itertools.product(cfg.directions, cfg.d_over_r))
    for i, (direction, dr) in enumerate(points):
        base, ctrl, pw = sir_samples(cfg, direction, dr, True, i)
        low = (base > 0) & (base < 10)
        for j, pc in enumerate(cfg.power_control):
            s = ctrl if pc else base
            writer.rows([[cfg.preset, len(cfg.power_control) * i + j, direction, dr, pc, len(s),
                          float(np.mean(s)), float(np.median(s)), float(np.percentile(s, 10)),
                          float(np.percentile(s, 90)), int(low.sum()),
                          float(np.mean(s[low])) if low.any() else None,
                          float(np.mean(pw)) if pc else cfg.p_min_dbm]])
    return writer.flush()


def run_qos(cfg: ExperimentConfig, out=None, revision=None, power_control: bool = True) -> str:
    m = qos_map(cfg.qos_grid, cfg.target_sir_db, power_control, cfg.cell_radius, cfg.n_ra,
                cfg.n_ms, cfg.p_min_dbm, (cfg.p_min_dbm, cfg.p_max_dbm), cfg.pc_iterations,
                cfg.ra_ring_fraction, cfg.edge_fraction)
    fr = ", ".join(f"{k}: {v:.4f}" for k, v in m.fractions().items())
    text = _header(cfg, revision) + f"# area_fraction_by_count: {fr}\n" + m.to_csv()
    if out:
        Path(out).write_text(text)
    return text


def run_experiment(cfg: ExperimentConfig, out=None, revision=None) -> str:
    if cfg.kind == "ber":
        return run_ber(cfg, out, revision)
    if cfg.kind == "sir":
        return run_sir(cfg, out, revision)
    return run_qos(cfg, out, revision)


def read_results(path_or_text) -> list[dict]:
    """Parse a results CSV (header comments skipped) into dict rows."""
    text = Path(path_or_text).read_text() if isinstance(path_or_text, Path) else path_or_text
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))
