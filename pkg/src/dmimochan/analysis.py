"""Non-stationarity toolbox: multitaper local scattering function and the
statistics derived from it (PDP, delay spread, collinearity, stationarity
distance), plus small shared estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import windows

#: multitaper defaults: one sequence over frequency, two over time
TIME_NW = 2.5
TIME_TAPERS = 2
FREQ_NW = 1.0
FREQ_TAPERS = 1

#: window lengths in snapshots (stationarity analysis / statistics extraction)
STATIONARITY_WINDOW = 150
STATISTICS_WINDOW = 300

COLLINEARITY_THRESHOLD = 0.9

#: delay-spread thresholding (dB)
PEAK_THRESHOLD_DB = 40.0
NOISE_MARGIN_DB = 5.0


class AnalysisError(ValueError):
    pass


@dataclass(eq=False)
class DpssSet:
    """Orthonormal Slepian taper family with concentration eigenvalues."""

    nw: float
    sequences: np.ndarray    # (J, N)
    eigenvalues: np.ndarray  # (J,), strictly decreasing

    def __post_init__(self):
        self.sequences = np.atleast_2d(np.asarray(self.sequences, dtype=float))
        self.eigenvalues = np.atleast_1d(np.asarray(self.eigenvalues, dtype=float))
        gram = self.sequences @ self.sequences.T
        if not np.allclose(gram, np.eye(self.num_tapers), atol=1e-9):
            raise AnalysisError("sequences must be orthonormal")
        if np.any(np.diff(self.eigenvalues) >= 0):
            raise AnalysisError("eigenvalues must be strictly decreasing")

    @property
    def length(self) -> int:
        return self.sequences.shape[1]

    @property
    def num_tapers(self) -> int:
        return self.sequences.shape[0]


def dpss(N: int, NW: float, J: int) -> DpssSet:
    """First J discrete prolate spheroidal sequences of length N.

    Computed with the symmetric tridiagonal formulation; the sign of each
    sequence is fixed so its mean (or, for zero-mean tapers, its first
    nonzero element) is non-negative.
    """
    if N < 8:
        raise AnalysisError("N must be >= 8")
    if not 1 <= J <= max(int(2 * NW - 1), 1):
        raise AnalysisError("J must satisfy 1 <= J <= 2*NW - 1")
    seq, ratios = windows.dpss(N, NW, Kmax=J, return_ratios=True, norm=2)
    seq = np.atleast_2d(seq)
    for j in range(seq.shape[0]):
        mean = seq[j].sum()
        if abs(mean) > 1e-9:
            sign = np.sign(mean)
        else:
            nz = seq[j][np.abs(seq[j]) > 1e-12]
            sign = np.sign(nz[0]) if nz.size else 1.0
        seq[j] *= sign
    return DpssSet(NW, seq, np.atleast_1d(ratios))


@dataclass(eq=False)
class LocalScatteringFunction:
    """Multitaper delay-Doppler power estimate at one window position.

    ``C`` has shape (delay bins = num tones, Doppler bins = window length)
    in raw FFT ordering (zero Doppler first).
    """

    C: np.ndarray
    k_t: int = 0

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        if self.C.ndim != 2:
            raise AnalysisError("C must be a 2-D array")
        if not np.all(np.isfinite(self.C)) or np.any(self.C < 0):
            raise AnalysisError("C must be finite and non-negative")


def local_scattering_function(H_window, tapers_time: DpssSet,
                              tapers_freq: DpssSet,
                              k_t: int = 0) -> LocalScatteringFunction:
    """Average of the tapered 2-D spectra of one channel window.

    ``H_window`` is (num_tones, K) complex. Each taper pair (frequency
    taper along tones, time taper along snapshots) filters the window; the
    squared magnitude of the (delay, Doppler) transform is averaged over
    the taper pairs. Transforms are orthonormal, so the total energy of the
    estimate equals the average tapered input energy.
    """
    H = np.asarray(H_window, dtype=complex)
    if H.ndim != 2:
        raise AnalysisError("H_window must be (num_tones, K)")
    F, K = H.shape
    if tapers_freq.length != F or tapers_time.length != K:
        raise AnalysisError("taper lengths must match the window")
    acc = np.zeros((F, K))
    for uf in tapers_freq.sequences:
        for ut in tapers_time.sequences:
            G = H * uf[:, None] * ut[None, :]
            S = np.fft.fft(np.fft.ifft(G, axis=0, norm="ortho"),
                           axis=1, norm="ortho")
            acc += (S.real ** 2 + S.imag ** 2)
    acc /= tapers_freq.num_tapers * tapers_time.num_tapers
    return LocalScatteringFunction(acc, k_t)


def pdp(C: LocalScatteringFunction) -> np.ndarray:
    """Power delay profile: marginal over the Doppler dimension."""
    return C.C.sum(axis=1)


def dsd(C: LocalScatteringFunction) -> np.ndarray:
    """Doppler spectral density: marginal over the delay dimension."""
    return C.C.sum(axis=0)


def rms_delay_spread(profile, delay_step_s: float,
                     noise_floor_db: float | None = None,
                     peak_threshold_db: float = PEAK_THRESHOLD_DB,
                     noise_margin_db: float = NOISE_MARGIN_DB) -> float:
    """RMS delay spread (s) of a linear-power delay profile.

    Bins below ``max(noise_floor + noise_margin, peak - peak_threshold)``
    (dB) are zeroed before taking the second central moment. Without an
    explicit noise floor, it is estimated as the median of the lowest
    decile of the profile bins. The delay axis is treated as circular (the
    profile is recentered on its peak first), so taper leakage wrapping
    past delay zero does not masquerade as a huge excess delay.
    """
    p = np.asarray(profile, dtype=float).ravel()
    if p.size == 0 or p.max() <= 0:
        raise AnalysisError("profile needs a positive peak")
    if delay_step_s <= 0:
        raise AnalysisError("delay_step_s must be positive")
    if noise_floor_db is None:
        low = np.sort(p)[: max(1, p.size // 10)]
        noise_floor_db = 10.0 * np.log10(max(low[low.size // 2], 1e-300))
    peak_db = 10.0 * np.log10(p.max())
    cut_db = max(noise_floor_db + noise_margin_db, peak_db - peak_threshold_db)
    shift = p.size // 2 - int(np.argmax(p))
    p = np.roll(p, shift)
    keep = 10.0 * np.log10(np.maximum(p, 1e-300)) >= cut_db
    if not np.any(keep):
        raise AnalysisError("no bins survive thresholding")
    w = p[keep]
    tau = (np.arange(p.size)[keep] - shift) * delay_step_s
    mean = (w * tau).sum() / w.sum()
    return float(np.sqrt((w * (tau - mean) ** 2).sum() / w.sum()))


def taper_delay_spread(num_tones: int, freq_nw: float = FREQ_NW,
                       peak_threshold_db: float = PEAK_THRESHOLD_DB,
                       noise_margin_db: float = NOISE_MARGIN_DB) -> float:
    """Delay smearing of the frequency taper itself, in delay bins.

    A single path measured through the multitaper pipeline is convolved
    with the taper's delay response; the value returned here is the RMS
    spread of that response under the usual thresholds, used to
    compensate delay-spread targets.
    """
    taper = dpss(num_tones, freq_nw, FREQ_TAPERS).sequences[0]
    kernel = np.abs(np.fft.ifft(taper, norm="ortho")) ** 2
    return rms_delay_spread(kernel, 1.0, None, peak_threshold_db, noise_margin_db)


def collinearity(C1: LocalScatteringFunction, C2: LocalScatteringFunction) -> float:
    """Cosine similarity of two vectorized local scattering functions."""
    a = C1.C.ravel()
    b = C2.C.ravel()
    if a.shape != b.shape:
        raise AnalysisError("shapes must match")
    na = np.sqrt((a * a).sum())
    nb = np.sqrt((b * b).sum())
    if na == 0 or nb == 0:
        raise AnalysisError("zero-norm input")
    return float((a * b).sum() / (na * nb))


def collinearity_matrix(scattering_functions) -> np.ndarray:
    """Pairwise collinearity of a sequence of scattering functions."""
    vecs = np.stack([np.asarray(c.C, dtype=float).ravel()
                     for c in scattering_functions]).astype(np.float32)
    norms = np.linalg.norm(vecs, axis=1)
    if np.any(norms == 0):
        raise AnalysisError("zero-norm input")
    R = (vecs @ vecs.T) / np.outer(norms, norms)
    R = np.clip(R.astype(float), -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    return R


def stationarity_distance(collinearity_mat, window_step_s: float, speeds,
                          threshold: float = COLLINEARITY_THRESHOLD,
                          window_len_s: float | None = None) -> np.ndarray:
    """Per-window stationarity distance in meters.

    For each diagonal index, the contiguous run of windows along the row
    with collinearity strictly above ``threshold`` is converted to seconds
    (run span plus one window length) and then to meters with the average
    agent speed over the run.
    """
    R = np.asarray(collinearity_mat, dtype=float)
    n = R.shape[0]
    if R.ndim != 2 or R.shape[1] != n:
        raise AnalysisError("collinearity matrix must be square")
    if not np.allclose(np.diag(R), 1.0, atol=1e-6):
        raise AnalysisError("diagonal must be one")
    if window_step_s <= 0:
        raise AnalysisError("window_step_s must be positive")
    if window_len_s is None:
        window_len_s = 2.0 * window_step_s  # 50 % overlap convention
    v = np.broadcast_to(np.asarray(speeds, dtype=float), (n,))
    out = np.empty(n)
    for i in range(n):
        ok = R[i] > threshold
        ok[i] = True  # the diagonal always belongs to its own region
        lo = i
        while lo > 0 and ok[lo - 1]:
            lo -= 1
        hi = i
        while hi < n - 1 and ok[hi + 1]:
            hi += 1
        span_s = (hi - lo) * window_step_s + window_len_s
        out[i] = span_s * v[lo:hi + 1].mean()
    return out


def avg_power_gain(H) -> np.ndarray:
    """Tone-averaged linear channel power per snapshot; input (tones, T)."""
    H = np.asarray(H)
    if H.size == 0:
        raise AnalysisError("empty input")
    return (H.real ** 2 + H.imag ** 2).mean(axis=0)


def mrt_gain(H_k) -> np.ndarray:
    """Per-tone maximum-ratio-transmission gain, no normalization:
    the row sums of |H|^2 for one snapshot's (tones, M) matrix."""
    H = np.atleast_2d(np.asarray(H_k))
    return (H.real ** 2 + H.imag ** 2).sum(axis=1)


def ecdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF: sorted values with probabilities i/N."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise AnalysisError("empty input")
    xs = np.sort(x)
    return xs, np.arange(1, x.size + 1) / x.size


def ecdf_eval(samples, at) -> float:
    """Empirical CDF of ``samples`` evaluated at a point."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    return float(np.searchsorted(x, at, side="right") / x.size)


def sliding_scattering(H, window: int, step: int, tapers_time: DpssSet,
                       tapers_freq: DpssSet):
    """Local scattering functions on a sliding window over (tones, T) data.

    Returns (functions, centers) where centers are the window-center
    snapshot indices.
    """
    H = np.asarray(H, dtype=complex)
    F, T = H.shape
    if window > T:
        raise AnalysisError("window exceeds the record")
    starts = np.arange(0, T - window + 1, step)
    funcs = []
    centers = []
    for s in starts:
        k_t = int(s + window // 2)
        funcs.append(local_scattering_function(H[:, s:s + window],
                                               tapers_time, tapers_freq, k_t))
        centers.append(k_t)
    return funcs, np.asarray(centers)
