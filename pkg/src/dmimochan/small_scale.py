"""Spatially consistent frequency-selective small-scale fading from
interacting objects, plus the Ricean extraction/fit estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange
from scipy.optimize import minimize_scalar
from scipy.stats import rice

from .geometry import SPEED_OF_LIGHT, Deployment, InteractingObject

#: sentinel K-factor reported for (near-)deterministic amplitude samples
K_MAX = 1e6


class SmallScaleError(ValueError):
    pass


@dataclass(frozen=True)
class RiceModel:
    """Ricean amplitude model in the (nu, sigma) convention;
    K = nu^2 / (2 sigma^2)."""

    nu: float
    sigma: float

    def __post_init__(self):
        if self.nu < 0:
            raise SmallScaleError("nu must be >= 0")
        if self.sigma <= 0:
            raise SmallScaleError("sigma must be positive")

    @property
    def k_factor(self) -> float:
        return self.nu ** 2 / (2.0 * self.sigma ** 2)

    @property
    def mean_power(self) -> float:
        return self.nu ** 2 + 2.0 * self.sigma ** 2

    def frozen(self):
        """Matching scipy distribution."""
        return rice(self.nu / self.sigma, scale=self.sigma)


#: measurement-derived per-state amplitude fits
DEFAULT_RICE_LOS = RiceModel(0.84, 0.49)
DEFAULT_RICE_OLOS = RiceModel(0.72, 0.59)


@dataclass(eq=False)
class IOSet:
    """Array-of-structs view of one anchor's interacting objects."""

    positions: np.ndarray      # (I, 3) m
    excess_delays: np.ndarray  # (I,) s
    weights: np.ndarray        # (I,) amplitude, sum of squares ~ 1
    phases: np.ndarray         # (I,) rad

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.excess_delays = np.asarray(self.excess_delays, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.phases = np.asarray(self.phases, dtype=float)
        n = self.positions.shape[0]
        if not (self.excess_delays.shape == self.weights.shape
                == self.phases.shape == (n,)):
            raise SmallScaleError("inconsistent IO array lengths")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def from_objects(cls, ios) -> "IOSet":
        if isinstance(ios, IOSet):
            return ios
        ios = list(ios)
        if not ios:
            raise SmallScaleError("empty IO set")
        return cls(
            np.stack([io.position for io in ios]),
            np.array([io.excess_delay for io in ios]),
            np.array([io.weight for io in ios]),
            np.array([io.phase0 for io in ios]),
        )

    def to_objects(self) -> list[InteractingObject]:
        return [
            InteractingObject(self.positions[i], float(self.excess_delays[i]),
                              float(self.weights[i]), float(self.phases[i]))
            for i in range(len(self))
        ]

    def with_weights(self, weights) -> "IOSet":
        return IOSet(self.positions, self.excess_delays,
                     np.asarray(weights, dtype=float), self.phases)


@njit(parallel=True, cache=True)
def _synth_rows(amp, zstep, num_tones):  # pragma: no cover - numba kernel
    """Sum of geometric tone progressions: out[r, n] = sum_p amp[r, p] * zstep[r, p]**n."""
    rows, paths = amp.shape
    out = np.zeros((rows, num_tones), dtype=np.complex128)
    for r in prange(rows):
        for p in range(paths):
            acc = amp[r, p]
            z = zstep[r, p]
            for n in range(num_tones):
                out[r, n] += acc
                acc *= z
    return out


def _k_split(k_inst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stable direct/diffuse amplitude split for K in [0, inf]."""
    k = np.asarray(k_inst, dtype=float)
    direct = np.where(np.isinf(k), 1.0, np.sqrt(k / (k + 1.0)))
    diffuse = np.where(np.isinf(k), 0.0, np.sqrt(1.0 / (k + 1.0)))
    return direct, diffuse


def synth_block_weighted(agent_positions, anchor_positions, io_positions,
                         io_excess, io_phases, io_weights, k_inst,
                         anchor_phases, deployment: Deployment) -> np.ndarray:
    """Frequency responses for a block of snapshots and several anchors,
    with per-snapshot IO weights.

    Shapes: agent (B, 3), anchors (M, 3), io_positions (M, I, 3),
    io_excess/io_phases (M, I), io_weights (B, M, I) amplitude weights,
    k_inst (B, M). Returns (B, M, F) complex with unit mean tone power in
    expectation over the start phases. Purely geometric: re-evaluating at
    the same positions is bit-identical, so Doppler and spatial
    correlation emerge from motion alone.
    """
    agent = np.atleast_2d(np.asarray(agent_positions, dtype=float))
    anchors = np.atleast_2d(np.asarray(anchor_positions, dtype=float))
    B, M = agent.shape[0], anchors.shape[0]
    F = deployment.num_tones
    io_pos = np.asarray(io_positions, dtype=float)
    io_exc = np.asarray(io_excess, dtype=float)
    io_ph = np.asarray(io_phases, dtype=float)
    n_io = io_pos.shape[1]
    io_w = np.broadcast_to(np.asarray(io_weights, dtype=float), (B, M, n_io))
    k_inst = np.broadcast_to(np.asarray(k_inst, dtype=float), (B, M))
    anchor_phases = np.broadcast_to(np.asarray(anchor_phases, dtype=float), (M,))
    if n_io < 2:
        raise SmallScaleError("need at least two interacting objects")
    if np.any(k_inst < 0):
        raise SmallScaleError("K must be >= 0")

    lam = deployment.wavelength
    f0 = deployment.tone_frequencies[0]
    df = deployment.tone_spacing

    d_anchor_io = np.linalg.norm(io_pos - anchors[:, None, :], axis=2)  # (M, I)
    d_agent_io = np.linalg.norm(agent[:, None, None, :] - io_pos[None], axis=3)
    d_dir = np.linalg.norm(agent[:, None, :] - anchors[None, :, :], axis=2)

    path = d_agent_io + d_anchor_io[None]                     # (B, M, I)
    tau_io = path / SPEED_OF_LIGHT + io_exc[None]
    tau_dir = d_dir / SPEED_OF_LIGHT

    direct, diffuse = _k_split(k_inst)
    phase_io = -2.0 * np.pi * path / lam + io_ph[None]
    phase_dir = -2.0 * np.pi * d_dir / lam + anchor_phases[None, :]

    tau = np.concatenate([tau_dir[..., None], tau_io], axis=2)           # (B, M, 1+I)
    amp = np.concatenate(
        [(direct * np.exp(1j * phase_dir))[..., None],
         diffuse[..., None] * io_w * np.exp(1j * phase_io)], axis=2)
    amp = amp * np.exp(-2j * np.pi * f0 * tau)
    zstep = np.exp(-2j * np.pi * df * tau)

    out = _synth_rows(amp.reshape(B * M, -1), zstep.reshape(B * M, -1), F)
    return out.reshape(B, M, F)


def synth_block(agent_positions, anchor_positions, iosets, k_inst,
                anchor_phases, deployment: Deployment) -> np.ndarray:
    """Frequency responses for a block of snapshots, one IO set per anchor."""
    iosets = [IOSet.from_objects(s) for s in iosets]
    if len(iosets) != np.atleast_2d(np.asarray(anchor_positions)).shape[0]:
        raise SmallScaleError("one IO set per anchor required")
    n_io = len(iosets[0])
    if any(len(s) != n_io for s in iosets):
        raise SmallScaleError("IO sets must share a common size")
    return synth_block_weighted(
        agent_positions, anchor_positions,
        np.stack([s.positions for s in iosets]),
        np.stack([s.excess_delays for s in iosets]),
        np.stack([s.phases for s in iosets]),
        np.stack([s.weights for s in iosets])[None],
        k_inst, anchor_phases, deployment)


def synth_frequency_response(agent_pos, anchor_idx: int, ios, k_inst: float,
                             deployment: Deployment,
                             anchor_phase: float = 0.0) -> np.ndarray:
    """Channel transfer function over the tone grid for one link.

    h(f_n) combines the geometric direct path, weighted ``sqrt(K/(K+1))``,
    with the interacting-object sum weighted ``sqrt(1/(K+1))``; every path
    carries its travel-distance carrier phase plus start phase, and tone
    phases follow the total path delay (geometric plus excess).
    """
    ioset = IOSet.from_objects(ios)
    out = synth_block(np.asarray(agent_pos, dtype=float).reshape(1, 3),
                      deployment.anchors[anchor_idx].reshape(1, 3),
                      [ioset], np.array([[k_inst]]),
                      np.array([anchor_phase]), deployment)
    return out[0, 0]


def filter_k_factor(prev_k: float, target_k: float, delta_d: float,
                    k_forgetting: float) -> float:
    """First-order recursion toward the state's target K with forgetting
    factor exp(-k_forgetting * delta_d)."""
    if prev_k < 0 or target_k < 0 or delta_d < 0 or k_forgetting < 0:
        raise SmallScaleError("inputs must be >= 0")
    a = math.exp(-k_forgetting * delta_d)
    return a * prev_k + (1.0 - a) * target_k


def extract_ssf(amplitudes, window_snapshots: int = 300) -> np.ndarray:
    """Small-scale amplitude estimate: element-wise ratio of the amplitude
    to its centered moving time-average over ``window_snapshots``."""
    A = np.atleast_2d(np.asarray(amplitudes, dtype=float))
    F, T = A.shape
    w = int(window_snapshots)
    if not 1 <= w <= T:
        raise SmallScaleError("window must fit inside the record")
    csum = np.concatenate([np.zeros((F, 1)), np.cumsum(A, axis=1)], axis=1)
    avg = (csum[:, w:] - csum[:, :-w]) / w
    if np.any(avg == 0):
        raise SmallScaleError("zero moving-average value")
    centers = np.arange(T - w + 1) + (w - 1) // 2
    return A[:, centers] / avg


def fit_rice(amplitude_samples) -> RiceModel:
    """Ricean fit of non-negative amplitude samples.

    A second/fourth-moment estimate of K is refined by a bounded
    one-dimensional likelihood maximization (mean power held at the sample
    value). Near-deterministic input reports the K_MAX sentinel.
    """
    a = np.asarray(amplitude_samples, dtype=float).ravel()
    if a.size < 100:
        raise SmallScaleError("need at least 100 samples")
    if np.any(a < 0):
        raise SmallScaleError("amplitudes must be >= 0")
    p = a * a
    m2 = p.mean()
    v = p.var()
    if m2 == 0:
        raise SmallScaleError("all-zero amplitudes")
    if v <= m2 ** 2 * 1e-12:
        nu = math.sqrt(m2)
        return RiceModel(nu, math.sqrt(m2 / (2.0 * (K_MAX + 1.0))))
    g = m2 ** 2 / v
    k0 = (g - 1.0) + math.sqrt(g * (g - 1.0)) if g > 1.0 else 0.0
    k0 = min(k0, K_MAX)

    # likelihood refinement over K alone; deterministic stride subsample
    sub = a[:: max(1, a.size // 200_000)]

    def nll(k: float) -> float:
        sig = math.sqrt(m2 / (2.0 * (k + 1.0)))
        b = math.sqrt(2.0 * k)
        return -rice.logpdf(sub, b, scale=sig).sum()

    hi = min(max(10.0, 4.0 * k0 + 1.0), K_MAX)
    res = minimize_scalar(nll, bounds=(0.0, hi), method="bounded",
                          options={"xatol": 1e-4})
    k = float(res.x) if res.success and nll(float(res.x)) <= nll(k0) else k0
    sigma = math.sqrt(m2 / (2.0 * (k + 1.0)))
    nu = math.sqrt(2.0 * k) * sigma
    return RiceModel(nu, sigma)
