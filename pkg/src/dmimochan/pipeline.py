"""End-to-end estimator suite: run every statistic the model is calibrated
against on a channel tensor and collect them in a report."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .geometry import Deployment, LinkState, Trajectory
from .large_scale import (D_MIN, PathGainModel, estimate_path_gain,
                          extract_lsf, fit_lognormal)
from .link_state import LinkStateTrace, count_los_links, estimate_transition_rate
from .small_scale import extract_ssf, fit_rice
from .synthesis import ChannelTensor, hardening_summary


class PipelineError(ValueError):
    pass


@dataclass
class StateStats:
    """Per-link-state slice of the report; None where not estimable."""

    pg_intercept_db: float | None = None
    pg_exponent: float | None = None
    lsf_mean_db: float | None = None
    lsf_sigma_db: float | None = None
    k_forgetting: float | None = None
    d_decorr_m: float | None = None
    rice_nu: float | None = None
    rice_sigma: float | None = None
    rice_k: float | None = None
    delay_spread_median_s: float | None = None
    stationarity_distance_median_m: float | None = None
    covariance: list | None = None  # M x M row-major, NaN where unavailable


@dataclass
class StatsReport:
    """Every estimated parameter of one analysis run."""

    num_anchors: int
    num_snapshots: int
    num_tones: int
    los: StateStats = field(default_factory=StateStats)
    olos: StateStats = field(default_factory=StateStats)
    transition_rate_per_m: list | None = None
    transition_rate_mean: float | None = None
    median_los_links: float | None = None
    hardening_ssf_gain_db: float | None = None
    hardening_full_outage_db: float | None = None

    def state(self, s) -> StateStats:
        return self.los if LinkState(int(s)) is LinkState.LOS else self.olos

    def to_dict(self) -> dict:
        def stats_dict(st: StateStats) -> dict:
            return {k: getattr(st, k) for k in StateStats.__dataclass_fields__}
        return {
            "num_anchors": self.num_anchors,
            "num_snapshots": self.num_snapshots,
            "num_tones": self.num_tones,
            "los": stats_dict(self.los),
            "olos": stats_dict(self.olos),
            "transition_rate_per_m": self.transition_rate_per_m,
            "transition_rate_mean": self.transition_rate_mean,
            "median_los_links": self.median_los_links,
            "hardening_ssf_gain_db": self.hardening_ssf_gain_db,
            "hardening_full_outage_db": self.hardening_full_outage_db,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True,
                          allow_nan=True) + "\n"


def masked_autocorrelation(x, mask, max_lag: int) -> np.ndarray:
    """Reflective autocorrelation using only sample pairs whose endpoints
    both satisfy ``mask``; NaN at lags without any valid pair."""
    xm = np.where(mask, x, 0.0)
    fm = mask.astype(float)
    n = x.size
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    sx = np.fft.rfft(xm, nfft)
    sm = np.fft.rfft(fm, nfft)
    num = np.fft.irfft(sx * np.conj(sx), nfft)[: max_lag + 1]
    cnt = np.fft.irfft(sm * np.conj(sm), nfft)[: max_lag + 1]
    cnt = np.round(cnt)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(cnt > 0, num / np.maximum(cnt, 1), np.nan)
    if not np.isfinite(r[0]) or r[0] <= 0:
        return np.full(max_lag + 1, np.nan)
    return r / r[0]


def fit_masked_k(x, mask, step_m: float, decorr_hint: float = 1.2) -> float | None:
    """Exponential-decay fit of the state-conditioned autocorrelation."""
    if np.count_nonzero(mask) < 50:
        return None
    max_lag = min(x.size - 2, max(4, int(round(5.0 * decorr_hint / step_m))))
    rho = masked_autocorrelation(x, mask, max_lag)
    lags = np.arange(max_lag + 1) * step_m
    k = 1.0 / decorr_hint
    for _ in range(3):
        sel = (lags <= 3.0 / k) & np.isfinite(rho) & (rho > 0.05)
        if np.count_nonzero(sel) < 3:
            return None
        d, l = lags[sel], np.log(rho[sel])
        denom = (d * d).sum()
        if denom == 0:
            return None
        k = max(-(d * l).sum() / denom, 1e-9)
    return float(k)


def masked_reflective_correlation(x, y, mask) -> float:
    nx = np.sqrt((x[mask] ** 2).sum())
    ny = np.sqrt((y[mask] ** 2).sum())
    if nx == 0 or ny == 0:
        return np.nan
    return float((x[mask] * y[mask]).sum() / (nx * ny))


def analyze(data: np.ndarray, trajectory: Trajectory, deployment: Deployment,
            states: LinkStateTrace | None = None,
            pg_d_exclude: float = D_MIN,
            statistics_window: int = analysis.STATISTICS_WINDOW,
            stationarity_window: int = analysis.STATIONARITY_WINDOW,
            collect_figures: bool = False) -> tuple[StatsReport, dict]:
    """Run the full estimator suite on an (M, T, F) channel tensor.

    With a state trace, statistics are conditioned per link state; without
    one, everything is pooled and reported identically for both states.
    Returns the report plus an artifact dict with the ECDF/PDP/collinearity
    data behind each figure (populated when ``collect_figures``).
    """
    M, T, F = data.shape
    if trajectory.num_snapshots != T:
        raise PipelineError("trajectory length does not match the tensor")
    if deployment.num_anchors != M or deployment.num_tones != F:
        raise PipelineError("deployment does not match the tensor")
    report = StatsReport(M, T, F)
    artifacts: dict = {}

    diff = trajectory.positions[None, :, :] - deployment.anchors[:, None, :]
    distances = np.linalg.norm(diff, axis=2)                  # (M, T)
    pbar = np.empty((M, T))
    for m in range(M):
        pbar[m] = analysis.avg_power_gain(data[m].T)
    pbar_db = 10.0 * np.log10(np.maximum(pbar, 1e-300))

    if states is not None and states.states.shape != (M, T):
        raise PipelineError("state trace does not match the tensor")
    smat = states.states if states is not None else None

    def state_mask(s: LinkState) -> np.ndarray:
        if smat is None:
            return np.ones((M, T), dtype=bool)
        return smat == int(s)

    # path gain per state
    pg_fit: dict[LinkState, PathGainModel | None] = {}
    for s in LinkState:
        mask = state_mask(s) & (distances >= pg_d_exclude)
        if np.count_nonzero(mask) >= 2:
            fit = estimate_path_gain(pbar_db[mask], distances[mask], pg_d_exclude)
            pg_fit[s] = fit
            report.state(s).pg_intercept_db = fit.intercept_db
            report.state(s).pg_exponent = fit.exponent
        else:
            pg_fit[s] = None

    # large-scale fading: residual against the state-matched fitted PG
    speeds = trajectory.speeds
    step_m = trajectory.total_distance / max(T - 1, 1)
    lsf = np.empty((M, T))
    for m in range(M):
        pg_db = np.empty(T)
        for s in LinkState:
            mask = state_mask(s)[m]
            model = pg_fit[s] or pg_fit[LinkState.LOS] or pg_fit[LinkState.OLOS]
            if model is None:
                raise PipelineError("no path-gain fit available")
            pg_db[mask] = model(distances[m][mask])
        lsf[m] = extract_lsf(pbar_db[m], distances[m], pg_db, speeds=speeds,
                             snapshot_rate=trajectory.snapshot_rate,
                             wavelength=deployment.wavelength)

    for s in LinkState:
        mask = state_mask(s)
        if np.count_nonzero(mask) >= 2:
            mean, sigma = fit_lognormal(lsf[mask])
            report.state(s).lsf_mean_db = mean
            report.state(s).lsf_sigma_db = sigma
        ks = [fit_masked_k(lsf[m], mask[m], step_m) for m in range(M)]
        ks = [k for k in ks if k is not None]
        if ks:
            report.state(s).k_forgetting = float(np.mean(ks))
            report.state(s).d_decorr_m = float(1.0 / np.mean(ks))
        # pairwise covariance on snapshots where both anchors share the state
        C = np.full((M, M), np.nan)
        np.fill_diagonal(C, 1.0)
        for a in range(M):
            for b in range(a + 1, M):
                both = mask[a] & mask[b]
                if np.count_nonzero(both) >= 100:
                    C[a, b] = C[b, a] = masked_reflective_correlation(
                        lsf[a], lsf[b], both)
        report.state(s).covariance = C.tolist()

    # small-scale fading, per state, pooled over anchors
    ssf_window = min(statistics_window, T)
    ssf_samples = {s: [] for s in LinkState}
    for m in range(M):
        amp = np.abs(data[m].astype(np.complex64)).T.astype(np.float64)  # (F, T)
        ratio = extract_ssf(amp, ssf_window)
        centers = np.arange(T - ssf_window + 1) + (ssf_window - 1) // 2
        for s in LinkState:
            cmask = state_mask(s)[m][centers]
            if np.any(cmask):
                sub = ratio[:, cmask]
                stride = max(1, sub.size // 400_000)
                ssf_samples[s].append(sub.ravel()[::stride])
    for s in LinkState:
        if ssf_samples[s]:
            pooled = np.concatenate(ssf_samples[s])
            if pooled.size >= 100:
                fit = fit_rice(pooled)
                report.state(s).rice_nu = fit.nu
                report.state(s).rice_sigma = fit.sigma
                report.state(s).rice_k = fit.k_factor
                if collect_figures:
                    stride = max(1, pooled.size // 200_000)
                    artifacts[f"ssf_ecdf_{s.label.lower()}"] = \
                        analysis.ecdf(pooled[::stride])

    # delay spread and stationarity from sliding scattering functions
    t_tapers = analysis.dpss(statistics_window, analysis.TIME_NW,
                             analysis.TIME_TAPERS)
    f_tapers = analysis.dpss(F, analysis.FREQ_NW, analysis.FREQ_TAPERS)
    delay_step = deployment.delay_resolution
    spreads = {s: [] for s in LinkState}
    if T >= statistics_window:
        for m in range(M):
            funcs, centers = analysis.sliding_scattering(
                data[m].T, statistics_window, statistics_window // 2,
                t_tapers, f_tapers)
            for fn, c in zip(funcs, centers):
                profile = analysis.pdp(fn)
                try:
                    ds = analysis.rms_delay_spread(profile, delay_step)
                except analysis.AnalysisError:
                    continue
                s = LinkState(int(smat[m, c])) if smat is not None else LinkState.LOS
                spreads[s].append(ds)
        for s in LinkState:
            if spreads[s]:
                report.state(s).delay_spread_median_s = float(np.median(spreads[s]))
        if collect_figures:
            for s in LinkState:
                if spreads[s]:
                    artifacts[f"delay_spread_ecdf_{s.label.lower()}"] = \
                        analysis.ecdf(spreads[s])

    st_tapers = analysis.dpss(stationarity_window, analysis.TIME_NW,
                              analysis.TIME_TAPERS)
    if T >= 2 * stationarity_window:
        step = stationarity_window // 2
        window_step_s = step / trajectory.snapshot_rate
        window_len_s = stationarity_window / trajectory.snapshot_rate
        dists = {s: [] for s in LinkState}
        for m in range(M):
            funcs, centers = analysis.sliding_scattering(
                data[m].T, stationarity_window, step, st_tapers, f_tapers)
            R = analysis.collinearity_matrix(funcs)
            v = speeds[centers]
            sd = analysis.stationarity_distance(R, window_step_s, v,
                                                window_len_s=window_len_s)
            for i, c in enumerate(centers):
                s = LinkState(int(smat[m, c])) if smat is not None else LinkState.LOS
                dists[s].append(sd[i])
            if collect_figures and m == 0:
                artifacts["collinearity_matrix"] = R
        for s in LinkState:
            if dists[s]:
                report.state(s).stationarity_distance_median_m = \
                    float(np.median(dists[s]))
        if collect_figures:
            for s in LinkState:
                if dists[s]:
                    artifacts[f"stationarity_ecdf_{s.label.lower()}"] = \
                        analysis.ecdf(dists[s])

    # state process statistics
    if states is not None:
        rates = estimate_transition_rate(states, trajectory)
        report.transition_rate_per_m = rates.tolist()
        report.transition_rate_mean = float(rates.mean())
        nlinks = count_los_links(states)
        report.median_los_links = float(np.median(nlinks))
        if collect_figures:
            artifacts["nlinks_ecdf"] = analysis.ecdf(nlinks)
            for s in LinkState:
                sel = state_mask(s)
                if np.any(sel):
                    stride = max(1, np.count_nonzero(sel) // 200_000)
                    artifacts[f"lsf_ecdf_{s.label.lower()}"] = \
                        analysis.ecdf(lsf[sel][::stride])

    # channel hardening
    if M >= 2:
        tensor = ChannelTensor(data, deployment, seed=-1)
        if T >= statistics_window:
            ssf_hard = hardening_summary(tensor, "ssf_only", statistics_window)
            report.hardening_ssf_gain_db = ssf_hard.outage_improvement_db(0.01)
            if collect_figures:
                artifacts["hardening_ssf_single"] = ssf_hard.single
                artifacts["hardening_ssf_combined"] = ssf_hard.combined
        full_hard = hardening_summary(tensor, "full")
        med = full_hard.quantile(0.5, "combined")
        q01 = full_hard.quantile(0.01, "combined")
        report.hardening_full_outage_db = 10.0 * np.log10(med / q01)
        if collect_figures:
            artifacts["hardening_full_single"] = full_hard.single
            artifacts["hardening_full_combined"] = full_hard.combined

    return report, artifacts


def write_figure_csvs(artifacts: dict, directory) -> list:
    """Write each collected figure artifact as a CSV; returns the paths."""
    import os

    os.makedirs(directory, exist_ok=True)
    written = []
    for name, value in artifacts.items():
        path = os.path.join(directory, f"{name}.csv")
        if isinstance(value, tuple):
            arr = np.column_stack(value)
            header = "value,probability"
        else:
            arr = np.asarray(value)
            header = ",".join(f"c{i}" for i in range(arr.shape[1]))
        np.savetxt(path, arr, delimiter=",", header=header, comments="")
        written.append(path)
    return written
