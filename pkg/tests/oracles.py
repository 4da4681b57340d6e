"""Independent oracles used by the tests.

These deliberately avoid the library's own code paths: coverage is checked
against Monte-Carlo disc-area sampling with analytic region membership,
moments against quadrature, and spectra against direct DFT evaluation.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate


def canonical_frame(a, b):
    """Axis/e1/e2 frame of the segment, canonical in the unordered pair."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo, hi = sorted((tuple(a), tuple(b)))
    axis = np.asarray(hi) - np.asarray(lo)
    axis = axis / np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0])
    if abs(axis @ helper) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return np.asarray(lo, dtype=float), axis, e1, e2


def frame_rect_cloud(a, b, radius, rect, t_span, spacing):
    """Dense point cloud filling a rectangle given in disc-frame (u, v)
    coordinates over an axis span (t0, t1) of the link."""
    base, axis, e1, e2 = canonical_frame(a, b)
    length = np.linalg.norm(np.asarray(b, float) - np.asarray(a, float))
    (u0, u1), (v0, v1) = rect
    t0, t1 = t_span
    us = np.arange(u0 + spacing / 2, u1, spacing)
    vs = np.arange(v0 + spacing / 2, v1, spacing)
    ts = np.linspace(t0 + 1e-6, t1 - 1e-6, max(2, int((t1 - t0) * 8)))
    uu, vv, tt = np.meshgrid(us, vs, ts, indexing="ij")
    pts = (base[None, :]
           + tt.ravel()[:, None] * length * axis[None, :]
           + uu.ravel()[:, None] * e1[None, :]
           + vv.ravel()[:, None] * e2[None, :])
    return pts


def coverage_area_oracle(radius, rects, n_samples=1_000_000, seed=0):
    """Monte-Carlo disc-area fraction (percent) covered by the union of
    disc-frame rectangles, sampling uniform points in the disc."""
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.random(n_samples))
    phi = rng.uniform(0, 2 * np.pi, n_samples)
    u = r * np.cos(phi)
    v = r * np.sin(phi)
    covered = np.zeros(n_samples, dtype=bool)
    for (u0, u1), (v0, v1) in rects:
        covered |= (u >= u0) & (u <= u1) & (v >= v0) & (v <= v1)
    return 100.0 * covered.mean()


def truncated_normal_mean_oracle(mu, sigma, lo, hi):
    """Mean of a truncated normal via direct quadrature."""
    def pdf(x):
        return np.exp(-0.5 * ((x - mu) / sigma) ** 2)

    z, _ = integrate.quad(pdf, lo, hi)
    m, _ = integrate.quad(lambda x: x * pdf(x), lo, hi)
    return m / z


def profile_rms_spread_oracle(delays, powers):
    """Direct second-moment RMS spread of a discrete profile."""
    delays = np.asarray(delays, dtype=float)
    powers = np.asarray(powers, dtype=float)
    p = powers / powers.sum()
    mean = (p * delays).sum()
    return float(np.sqrt((p * (delays - mean) ** 2).sum()))


def dpss_concentration_oracle(sequence, half_bandwidth):
    """Spectral concentration of a taper by quadrature of its DFT power
    inside the band (-W, W), W in cycles/sample."""
    n = sequence.size
    nfft = 1 << 16
    spec = np.abs(np.fft.fft(sequence, nfft)) ** 2
    freqs = np.fft.fftfreq(nfft)
    inside = spec[np.abs(freqs) <= half_bandwidth].sum()
    return inside / spec.sum()


def exponential_ks_distance(samples, rate):
    """Kolmogorov-Smirnov distance to Exponential(rate)."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    cdf = 1.0 - np.exp(-rate * x)
    upper = np.abs(np.arange(1, n + 1) / n - cdf).max()
    lower = np.abs(np.arange(0, n) / n - cdf).max()
    return max(upper, lower)


def ks_critical_value(n, alpha=0.01):
    """Asymptotic two-sided KS critical value."""
    c = np.sqrt(-0.5 * np.log(alpha / 2.0))
    return c / np.sqrt(n)
