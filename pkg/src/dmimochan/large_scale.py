"""Distance-dependent path gain and correlated log-normal large-scale
fading, with the matching estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import truncnorm

from .geometry import LinkState, Trajectory
from .link_state import LinkStateTrace

#: path-gain fit validity range (m); points below d_min carry strong
#: combined antenna-pattern effects and are excluded from fits
D_MIN = 2.65 * math.sqrt(2.0)
D_MAX = 30.0


class LargeScaleError(ValueError):
    pass


@dataclass(frozen=True)
class PerState:
    """Tiny per-link-state parameter pair, indexable by LinkState."""

    los: object
    olos: object

    def __getitem__(self, state):
        return self.los if LinkState(int(state)) is LinkState.LOS else self.olos


@dataclass(frozen=True)
class PathGainModel:
    """Log-distance path gain: intercept_db + (-exponent) * 10log10(d/d0)."""

    intercept_db: float
    exponent: float
    d0: float = 1.0
    valid_range: tuple = (D_MIN, D_MAX)

    def __post_init__(self):
        if self.exponent < 0:
            raise LargeScaleError("exponent must be >= 0")
        if self.d0 <= 0:
            raise LargeScaleError("d0 must be positive")
        lo, hi = self.valid_range
        if not 0 < lo < hi:
            raise LargeScaleError("invalid valid_range")

    def __call__(self, d, clamp: bool = False):
        """Evaluate the log-distance law; with ``clamp`` the distance is
        clipped to the validity range first (generator behavior)."""
        d = np.asarray(d, dtype=float)
        if clamp:
            lo, hi = self.valid_range
            d = np.clip(d, lo, hi)
        return self.intercept_db - self.exponent * 10.0 * np.log10(d / self.d0)

    def count_clamped(self, d) -> int:
        lo, hi = self.valid_range
        d = np.asarray(d, dtype=float)
        return int(np.count_nonzero((d < lo) | (d > hi)))


#: measurement-derived dual-state fit
DEFAULT_PATH_GAIN = PerState(
    los=PathGainModel(-44.24, 0.86),
    olos=PathGainModel(-48.78, 0.95),
)


@dataclass(frozen=True)
class ShadowingModel:
    """Log-normal large-scale fading in dB: zero mean, per-state standard
    deviation and exponential-autocorrelation forgetting factor (1/m)."""

    sigma_db: PerState = PerState(2.13, 3.25)
    k_forgetting: PerState = PerState(0.82, 0.81)
    mean_db: float = 0.0

    def __post_init__(self):
        for state in LinkState:
            if self.sigma_db[state] < 0:
                raise LargeScaleError("sigma_db must be >= 0")
            if self.k_forgetting[state] <= 0:
                raise LargeScaleError("k_forgetting must be positive")
        if self.mean_db != 0.0:
            raise LargeScaleError("mean is fixed at zero")

    def decorrelation_distance(self, state) -> float:
        return 1.0 / self.k_forgetting[state]


DEFAULT_SHADOWING = ShadowingModel()


@dataclass(frozen=True)
class CovarianceParams:
    """Truncated-normal distribution of cross-anchor correlation entries."""

    mean: PerState = PerState(0.1, 0.5)
    std: PerState = PerState(0.4, 0.5)
    truncation: float = 0.9
    std_is_variance: bool = False  # paper is ambiguous; std by default

    def scale(self, state) -> float:
        s = self.std[state]
        return math.sqrt(s) if self.std_is_variance else s


DEFAULT_COVARIANCE = CovarianceParams()


@dataclass(eq=False)
class CovarianceMatrix:
    """Symmetric cross-anchor correlation matrix with unit diagonal,
    positive semi-definite after repair."""

    C: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if C.shape[0] != C.shape[1]:
            raise LargeScaleError("covariance must be square")
        if not np.allclose(C, C.T, atol=1e-12):
            raise LargeScaleError("covariance must be symmetric")
        if not np.allclose(np.diag(C), 1.0, atol=1e-9):
            raise LargeScaleError("diagonal must be one")
        if np.linalg.eigvalsh(C).min() < -1e-9:
            raise LargeScaleError("covariance must be PSD (repair first)")
        self.C = C

    @property
    def num_anchors(self) -> int:
        return self.C.shape[0]

    def factor(self) -> np.ndarray:
        """PSD square root L with L @ L.T == C (eigen-based; tolerates
        semidefinite matrices where Cholesky would fail)."""
        w, V = np.linalg.eigh(self.C)
        return V * np.sqrt(np.clip(w, 0.0, None))


def draw_covariance_entries(rng: np.random.Generator, n: int, state,
                            params: CovarianceParams = DEFAULT_COVARIANCE) -> np.ndarray:
    """Raw i.i.d. truncated-normal correlation entries (pre-repair)."""
    mu = params.mean[state]
    scale = params.scale(state)
    a = (-params.truncation - mu) / scale
    b = (params.truncation - mu) / scale
    return truncnorm.rvs(a, b, loc=mu, scale=scale, size=n, random_state=rng)


def repair_psd(C: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Clip eigenvalues at ``floor`` and renormalize the diagonal to one."""
    C = 0.5 * (C + C.T)
    w, V = np.linalg.eigh(C)
    C = (V * np.clip(w, floor, None)) @ V.T
    d = np.sqrt(np.diag(C))
    C = C / np.outer(d, d)
    np.fill_diagonal(C, 1.0)
    return 0.5 * (C + C.T)


def draw_covariance(rng: np.random.Generator, M: int, state,
                    params: CovarianceParams = DEFAULT_COVARIANCE) -> CovarianceMatrix:
    """Draw a cross-anchor covariance matrix for one state and repair it
    to positive semi-definiteness."""
    if M < 1:
        raise LargeScaleError("M must be >= 1")
    C = np.eye(M)
    if M > 1:
        iu = np.triu_indices(M, k=1)
        C[iu] = draw_covariance_entries(rng, len(iu[0]), state, params)
        C = C + np.triu(C, k=1).T
        C = repair_psd(C)
    return CovarianceMatrix(C)


def path_gain(d, state, models: PerState = DEFAULT_PATH_GAIN,
              clamp: bool = False):
    """Deterministic path gain in dB at distance ``d`` for one state.

    The plain log-distance law is evaluated as-is (strictly decreasing in
    d); generators pass ``clamp=True`` to clip distances to the model's
    validity range instead of extrapolating, counting clamped samples via
    ``models[state].count_clamped``.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise LargeScaleError("distance must be positive")
    state_arr = np.asarray(state)
    if state_arr.ndim == 0:
        return models[state](d, clamp)
    out = np.empty(np.broadcast(d, state_arr).shape)
    for s in LinkState:
        mask = state_arr == int(s)
        out[mask] = np.broadcast_to(models[s](d, clamp), out.shape)[mask]
    return out


def simulate_lsf(rng: np.random.Generator, trajectory: Trajectory,
                 states: LinkStateTrace, shadowing: ShadowingModel,
                 cov: CovarianceMatrix, cov_olos: CovarianceMatrix | None = None,
                 cov_policy: str = "majority") -> np.ndarray:
    """Correlated large-scale fading in dB, anchors x snapshots.

    Per snapshot, an i.i.d. standard-normal innovation vector is correlated
    with the PSD factor of the covariance matrix, then each anchor runs a
    variance-preserving AR(1) recursion whose per-step coefficient is
    ``exp(-k_state * dd_k)``. Zero movement keeps the fading frozen. With a
    second matrix given, the per-snapshot matrix follows ``cov_policy``:
    "majority" picks by the majority state across anchors, "los"/"olos"
    always use the respective matrix.
    """
    M = states.num_anchors
    T = states.num_snapshots
    if trajectory.num_snapshots != T:
        raise LargeScaleError("trajectory and state trace disagree on T")
    if cov.num_anchors != M or (cov_olos is not None and cov_olos.num_anchors != M):
        raise LargeScaleError("covariance size must match anchor count")

    u = rng.standard_normal((M, T))
    if cov_olos is None:
        s = cov.factor() @ u
    else:
        L = {LinkState.LOS: cov.factor(), LinkState.OLOS: cov_olos.factor()}
        if cov_policy == "majority":
            n_los = np.count_nonzero(states.states == LinkState.LOS, axis=0)
            pick_olos = n_los * 2 < M
        elif cov_policy in ("los", "olos"):
            pick_olos = np.full(T, cov_policy == "olos")
        else:
            raise LargeScaleError(f"unknown cov_policy {cov_policy!r}")
        s = np.empty((M, T))
        s[:, ~pick_olos] = L[LinkState.LOS] @ u[:, ~pick_olos]
        s[:, pick_olos] = L[LinkState.OLOS] @ u[:, pick_olos]

    sigma = np.where(states.states == LinkState.LOS,
                     shadowing.sigma_db[LinkState.LOS],
                     shadowing.sigma_db[LinkState.OLOS])
    kf = np.where(states.states == LinkState.LOS,
                  shadowing.k_forgetting[LinkState.LOS],
                  shadowing.k_forgetting[LinkState.OLOS])
    a = np.exp(-kf * trajectory.step_distances[None, :])

    x = np.empty((M, T))
    x[:, 0] = sigma[:, 0] * s[:, 0]
    for k in range(1, T):
        ak = a[:, k]
        x[:, k] = ak * x[:, k - 1] + sigma[:, k] * np.sqrt(1.0 - ak ** 2) * s[:, k]
    return x


def estimate_path_gain(avg_power_db, distances, d_exclude: float = D_MIN,
                       d0: float = 1.0) -> PathGainModel:
    """Least-squares log-distance fit over samples with d >= d_exclude."""
    y = np.asarray(avg_power_db, dtype=float).ravel()
    d = np.asarray(distances, dtype=float).ravel()
    if y.shape != d.shape:
        raise LargeScaleError("power and distance lengths differ")
    if np.any(d <= 0):
        raise LargeScaleError("distances must be positive")
    keep = d >= d_exclude
    if np.count_nonzero(keep) < 2:
        raise LargeScaleError("fewer than two samples beyond d_exclude")
    x = 10.0 * np.log10(d[keep] / d0)
    slope, intercept = np.polyfit(x, y[keep], 1)
    rng_lo = float(d[keep].min())
    rng_hi = float(max(d[keep].max(), rng_lo * (1 + 1e-12)))
    return PathGainModel(float(intercept), float(max(-slope, 0.0)), d0,
                         (rng_lo, rng_hi))


def estimate_path_gain_binned(avg_power_db, distances, n_bins: int = 1000,
                              d_exclude: float = D_MIN,
                              d0: float = 1.0) -> PathGainModel:
    """Path-gain fit on log-distance bin averages.

    Log-distances are split into ``n_bins`` equal bins; each non-empty bin
    contributes its mean log-distance and mean dB gain to the fit. This is
    the equal-distance-weight estimator variant; it shifts the fit on
    skewed noisy data and is not used by the generator.
    """
    y = np.asarray(avg_power_db, dtype=float).ravel()
    d = np.asarray(distances, dtype=float).ravel()
    if np.any(d <= 0):
        raise LargeScaleError("distances must be positive")
    keep = d >= d_exclude
    x = 10.0 * np.log10(d[keep] / d0)
    y = y[keep]
    if x.size < 2:
        raise LargeScaleError("fewer than two samples beyond d_exclude")
    edges = np.linspace(x.min(), x.max() * (1 + 1e-12), n_bins + 1)
    idx = np.clip(np.digitize(x, edges) - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    nonempty = counts > 0
    if np.count_nonzero(nonempty) < 2:
        raise LargeScaleError("fewer than two non-empty bins")
    mean_x = np.bincount(idx, weights=x, minlength=n_bins)[nonempty] / counts[nonempty]
    mean_y = np.bincount(idx, weights=y, minlength=n_bins)[nonempty] / counts[nonempty]
    slope, intercept = np.polyfit(mean_x, mean_y, 1)
    lo = float(d[keep].min())
    return PathGainModel(float(intercept), float(max(-slope, 0.0)), d0,
                         (lo, float(max(d[keep].max(), lo * (1 + 1e-12)))))


def moving_average(values, window: np.ndarray | int) -> np.ndarray:
    """Centered moving average with per-sample (possibly varying) window
    length in samples; windows truncate at the record edges."""
    v = np.asarray(values, dtype=float)
    n = v.shape[-1]
    w = np.broadcast_to(np.asarray(window), (n,)).astype(int)
    half = np.maximum(w, 1) // 2
    lo = np.maximum(0, np.arange(n) - half)
    hi = np.minimum(n, np.arange(n) + half + 1)
    csum = np.concatenate([np.zeros(v.shape[:-1] + (1,)), np.cumsum(v, axis=-1)],
                          axis=-1)
    return (csum[..., hi] - csum[..., lo]) / (hi - lo)


def extract_lsf(avg_power_db, distances, pg, window_m: float | None = None,
                speeds=None, snapshot_rate: float = 200.0,
                wavelength: float = 299_792_458.0 / 3.75e9) -> np.ndarray:
    """Large-scale fading estimate: moving average of the path-gain
    residual over roughly ``window_m`` of travel (default ten wavelengths).

    ``pg`` is either a PathGainModel evaluated at ``distances`` or a
    precomputed per-sample path-gain array (for state-dependent models).
    ``speeds`` (m/s, per sample or scalar) converts the window from meters
    to snapshots; zero/slow speeds clamp the window at the record length.
    """
    y = np.asarray(avg_power_db, dtype=float)
    if y.size == 0:
        raise LargeScaleError("empty input")
    d = np.asarray(distances, dtype=float)
    pg_db = pg(d) if isinstance(pg, PathGainModel) else np.asarray(pg, dtype=float)
    residual = y - pg_db
    if window_m is None:
        window_m = 10.0 * wavelength
    n = residual.shape[-1]
    if speeds is None:
        speeds = 1.0
    v = np.broadcast_to(np.asarray(speeds, dtype=float), (n,))
    step_m = np.maximum(v, 1e-12) / snapshot_rate
    win = np.clip(np.round(window_m / step_m).astype(int), 1, n)
    return moving_average(residual, win)


def reflective_correlation(x, y) -> float:
    """Cosine similarity; the mean is deliberately not removed."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise LargeScaleError("inputs must have equal length")
    nx = np.sqrt((x * x).sum())
    ny = np.sqrt((y * y).sum())
    if nx == 0 or ny == 0:
        raise LargeScaleError("zero-norm input")
    return float((x * y).sum() / (nx * ny))


def reflective_correlation_matrix(samples: np.ndarray) -> np.ndarray:
    """Pairwise reflective correlation of row vectors."""
    x = np.asarray(samples, dtype=float)
    norms = np.sqrt((x * x).sum(axis=1))
    if np.any(norms == 0):
        raise LargeScaleError("zero-norm row")
    return (x @ x.T) / np.outer(norms, norms)


def fit_lognormal(lsf_db) -> tuple[float, float]:
    """Sample mean and standard deviation of dB-domain fading values."""
    x = np.asarray(lsf_db, dtype=float).ravel()
    if x.size < 2:
        raise LargeScaleError("need at least two samples")
    return float(x.mean()), float(x.std(ddof=1))


def autocorrelation_profile(lsf_db, max_lag: int) -> np.ndarray:
    """Normalized (reflective) autocorrelation up to ``max_lag`` samples,
    with per-lag unbiased normalization; computed via FFT."""
    x = np.asarray(lsf_db, dtype=float).ravel()
    n = x.size
    if max_lag >= n:
        raise LargeScaleError("max_lag must be below the sample count")
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, nfft)
    r = np.fft.irfft(spec * np.conj(spec), nfft)[: max_lag + 1]
    r = r / (n - np.arange(max_lag + 1))
    if r[0] == 0:
        raise LargeScaleError("zero input")
    return r / r[0]


def fit_autocorrelation(lsf_db, distances_m) -> float:
    """Forgetting factor k (1/m) of an exponential autocorrelation fit.

    The empirical autocorrelation over lag distance is fitted with
    ``exp(-k d)`` on lags up to about three decorrelation distances,
    iterating the cut twice; the fit is a least-squares line through the
    origin in log domain.
    """
    x = np.asarray(lsf_db, dtype=float).ravel()
    cum = np.asarray(distances_m, dtype=float).ravel()
    if x.size < 2 or cum.size != x.size:
        raise LargeScaleError("need samples with matching cumulative distances")
    if cum[-1] <= cum[0]:
        raise LargeScaleError("cumulative distance must increase")
    step = (cum[-1] - cum[0]) / (x.size - 1)
    if np.ptp(x) == 0:
        raise LargeScaleError("constant input has undefined autocorrelation")

    max_lag = min(x.size - 2, max(2, int(round(x.size * 0.2))))
    rho = autocorrelation_profile(x, max_lag)
    lags_m = np.arange(max_lag + 1) * step

    # initial guess from the 1/e crossing
    below = np.nonzero(rho < np.exp(-1.0))[0]
    k = 1.0 / (lags_m[below[0]]) if below.size and below[0] > 0 else 3.0 / step

    from scipy.optimize import curve_fit

    def decay(d, kk):
        return np.exp(-kk * d)

    for _ in range(3):
        mask = lags_m <= 3.0 / k
        if np.count_nonzero(mask) < 3:
            return float(min(k, 3.0 / step))
        try:
            (k_new,), _ = curve_fit(decay, lags_m[mask], rho[mask], p0=[k],
                                    bounds=(1e-9, np.inf), maxfev=200)
        except RuntimeError:
            break
        k = float(k_new)
    return float(k)
