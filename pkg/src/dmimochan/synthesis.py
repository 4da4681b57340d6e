"""Channel generation: initialization plus the per-snapshot simulation
loop composing path gain, correlated shadowing and interacting-object
small-scale fading into the channel tensor; MRT/hardening summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .geometry import (SPEED_OF_LIGHT, Deployment, LinkState, Trajectory,
                       place_interacting_objects, shape_exponential_weights)
from .large_scale import (DEFAULT_COVARIANCE, DEFAULT_PATH_GAIN,
                          DEFAULT_SHADOWING, CovarianceParams,
                          CovarianceMatrix, PerState, ShadowingModel,
                          draw_covariance, path_gain, simulate_lsf)
from .link_state import (DEFAULT_RATE_BOUNDS, LinkStateTrace, TransitionModel,
                         draw_transition_model, simulate_states)
from .small_scale import (DEFAULT_RICE_LOS, DEFAULT_RICE_OLOS, IOSet,
                          RiceModel, synth_block_weighted)


class SynthesisError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """All tunables of the generator; defaults are the measurement-derived
    values used throughout the model."""

    path_gain: PerState = DEFAULT_PATH_GAIN
    shadowing: ShadowingModel = DEFAULT_SHADOWING
    rice: PerState = PerState(DEFAULT_RICE_LOS, DEFAULT_RICE_OLOS)
    covariance: CovarianceParams = DEFAULT_COVARIANCE
    transition_bounds: tuple = DEFAULT_RATE_BOUNDS
    n_io: int = 30
    target_delay_spread: PerState = PerState(47e-9, 53e-9)
    delay_spread_sigma_log: float = 0.0  # per-link log-normal spread scatter
    cov_policy: str = "majority"
    force_state: LinkState | None = None    # pin every link to one state
    initial_state: LinkState | None = None  # None: stationary 50/50 draw
    seed: int = 1

    def __post_init__(self):
        if self.n_io < 2:
            raise SynthesisError("n_io must be >= 2")
        for s in LinkState:
            if self.target_delay_spread[s] <= 0:
                raise SynthesisError("delay-spread targets must be positive")
        if self.delay_spread_sigma_log < 0:
            raise SynthesisError("delay_spread_sigma_log must be >= 0")

    def target_k(self, state) -> float:
        return self.rice[state].k_factor


@dataclass(eq=False)
class GroundTruth:
    """Generator side channel used for round-trip validation."""

    states: LinkStateTrace
    lsf_db: np.ndarray       # (M, T)
    k_factor: np.ndarray     # (M, T)
    pg_db: np.ndarray        # (M, T)
    distances: np.ndarray    # (M, T)
    transition_rates: np.ndarray
    covariance: PerState     # drawn CovarianceMatrix per state
    clamped_distances: int = 0


@dataclass(eq=False)
class ChannelTensor:
    """Complex transfer functions, anchors x snapshots x tones."""

    data: np.ndarray
    deployment: Deployment
    seed: int
    truth: GroundTruth | None = None

    def __post_init__(self):
        if self.data.ndim != 3:
            raise SynthesisError("tensor must be (M, T, F)")
        if self.data.shape[0] != self.deployment.num_anchors:
            raise SynthesisError("anchor count mismatch")
        if self.data.shape[2] != self.deployment.num_tones:
            raise SynthesisError("tone count mismatch")
        if not np.all(np.isfinite(self.data)):
            raise SynthesisError("tensor values must be finite")

    @property
    def shape(self):
        return self.data.shape


@dataclass(eq=False)
class SimulationState:
    """Fully initialized simulation: drawn model realizations plus the
    pre-rolled stochastic processes consumed by :func:`step`."""

    deployment: Deployment
    trajectory: Trajectory
    config: ModelConfig
    transition_model: TransitionModel
    covariance: PerState
    anchor_phases: np.ndarray
    io_positions: np.ndarray   # (M, I, 3)
    io_excess: np.ndarray      # (M, I)
    io_phases: np.ndarray      # (M, I)
    io_weights: PerState       # (M, I) amplitude weights per state
    states: LinkStateTrace = field(repr=False, default=None)
    lsf_db: np.ndarray = field(repr=False, default=None)
    k_inst: np.ndarray = field(repr=False, default=None)
    pg_db: np.ndarray = field(repr=False, default=None)
    distances: np.ndarray = field(repr=False, default=None)
    clamped_distances: int = 0

    @property
    def num_snapshots(self) -> int:
        return self.trajectory.num_snapshots

    def io_sets(self, state) -> list[IOSet]:
        w = self.io_weights[state]
        return [IOSet(self.io_positions[m], self.io_excess[m], w[m],
                      self.io_phases[m])
                for m in range(self.deployment.num_anchors)]

    def truth(self) -> GroundTruth:
        return GroundTruth(self.states, self.lsf_db, self.k_inst, self.pg_db,
                           self.distances, self.transition_model.rates,
                           self.covariance, self.clamped_distances)


def _composite_weights(tau_total, tau_direct, direct_power, target_spread,
                       taper_spread_s) -> np.ndarray:
    """Amplitude weights shaping the composite (direct + diffuse) profile.

    The target is deflated by the analysis taper's own delay smearing so
    that delay spreads estimated from generated channels land on the
    configured value.
    """
    eff2 = target_spread ** 2 - taper_spread_s ** 2
    eff = np.sqrt(max(eff2, (0.25 * target_spread) ** 2))
    power = shape_exponential_weights(tau_total, eff, direct_delay=tau_direct,
                                      direct_power=direct_power)
    return np.sqrt(power)


def initialize(rng: np.random.Generator | None, config: ModelConfig,
               deployment: Deployment, trajectory: Trajectory) -> SimulationState:
    """Run the initialization phase of the simulation recipe.

    Draws the covariance matrices, per-anchor transition rates, interacting
    objects with delay-spread shaping and the start phases, then pre-rolls
    the state process, correlated shadowing and the filtered K-factor along
    the trajectory. Everything is deterministic given the config seed
    (``rng`` is accepted for API symmetry but the master seed governs).
    """
    if trajectory.snapshot_rate != deployment.snapshot_rate:
        raise SynthesisError("trajectory and deployment snapshot rates differ")
    M = deployment.num_anchors
    T = trajectory.num_snapshots
    root = np.random.default_rng(config.seed) if rng is None else rng
    (r_trans, r_init, r_cov, r_io, r_phase, r_spread,
     r_states, r_lsf) = root.spawn(8)

    model = draw_transition_model(r_trans, M, config.transition_bounds)

    if config.force_state is not None:
        initial = np.full(M, int(config.force_state), dtype=np.int8)
    elif config.initial_state is not None:
        initial = np.full(M, int(config.initial_state), dtype=np.int8)
    else:
        initial = np.where(r_init.random(M) < 0.5, int(LinkState.LOS),
                           int(LinkState.OLOS)).astype(np.int8)

    cov = PerState(draw_covariance(r_cov, M, LinkState.LOS, config.covariance),
                   draw_covariance(r_cov, M, LinkState.OLOS, config.covariance))

    # interacting objects: shared geometry per anchor, per-state weights
    base_spread = 0.5 * (config.target_delay_spread[LinkState.LOS]
                         + config.target_delay_spread[LinkState.OLOS])
    io_pos = np.empty((M, config.n_io, 3))
    io_exc = np.empty((M, config.n_io))
    io_ph = np.empty((M, config.n_io))
    for m, stream in enumerate(r_io.spawn(M)):
        ios = place_interacting_objects(stream, deployment, m, config.n_io,
                                        base_spread)
        ioset = IOSet.from_objects(ios)
        io_pos[m] = ioset.positions
        io_exc[m] = ioset.excess_delays
        io_ph[m] = ioset.phases

    anchor_phases = r_phase.uniform(0.0, 2 * np.pi, M)

    spread_factor = (np.exp(config.delay_spread_sigma_log
                            * r_spread.standard_normal(M))
                     if config.delay_spread_sigma_log > 0 else np.ones(M))

    # composite delay-spread shaping at the trajectory centroid
    ref = trajectory.positions.mean(axis=0)
    taper_bins = analysis.taper_delay_spread(deployment.num_tones)
    taper_s = taper_bins * deployment.delay_resolution
    weights = {}
    for s in LinkState:
        w = np.empty((M, config.n_io))
        k_target = config.target_k(s)
        direct_power = k_target / (k_target + 1.0)
        for m in range(M):
            d_dir = np.linalg.norm(ref - deployment.anchors[m])
            d_path = (np.linalg.norm(ref - io_pos[m], axis=1)
                      + np.linalg.norm(io_pos[m] - deployment.anchors[m], axis=1))
            tau = d_path / SPEED_OF_LIGHT + io_exc[m]
            target = config.target_delay_spread[s] * spread_factor[m]
            w[m] = _composite_weights(tau, d_dir / SPEED_OF_LIGHT, direct_power,
                                      target, taper_s)
        weights[s] = w
    io_weights = PerState(weights[LinkState.LOS], weights[LinkState.OLOS])

    state = SimulationState(deployment, trajectory, config, model, cov,
                            anchor_phases, io_pos, io_exc, io_ph, io_weights)

    # pre-roll the stochastic processes along the trajectory
    if config.force_state is not None:
        trace = LinkStateTrace(np.full((M, T), int(config.force_state),
                                       dtype=np.int8))
        r_states.spawn(M)  # keep downstream stream assignment stable
    else:
        trace = simulate_states(r_states, model, trajectory, initial)
    state.states = trace

    state.lsf_db = simulate_lsf(r_lsf, trajectory, trace, config.shadowing,
                                cov.los, cov.olos, config.cov_policy)

    dd = trajectory.step_distances
    k_targets = np.where(trace.states == int(LinkState.LOS),
                         config.target_k(LinkState.LOS),
                         config.target_k(LinkState.OLOS))
    kf = np.where(trace.states == int(LinkState.LOS),
                  config.shadowing.k_forgetting[LinkState.LOS],
                  config.shadowing.k_forgetting[LinkState.OLOS])
    k_inst = np.empty((M, T))
    k_inst[:, 0] = k_targets[:, 0]
    for k in range(1, T):
        a = np.exp(-kf[:, k] * dd[k])
        k_inst[:, k] = a * k_inst[:, k - 1] + (1.0 - a) * k_targets[:, k]
    state.k_inst = k_inst

    diff = trajectory.positions[None, :, :] - deployment.anchors[:, None, :]
    state.distances = np.linalg.norm(diff, axis=2)
    state.pg_db = path_gain(state.distances, trace.states, config.path_gain,
                            clamp=True)
    state.clamped_distances = int(
        config.path_gain[LinkState.LOS].count_clamped(state.distances))
    return state


def _synthesize_block(state: SimulationState, ks: np.ndarray) -> np.ndarray:
    """Small-scale responses scaled by 10^((PG+LSF)/20) for snapshot
    indices ``ks``; returns (len(ks), M, F) complex."""
    M = state.deployment.num_anchors
    st = state.states.states[:, ks].T                       # (B, M)
    w = np.where(st[..., None] == int(LinkState.LOS),
                 state.io_weights[LinkState.LOS][None],
                 state.io_weights[LinkState.OLOS][None])    # (B, M, I)
    h = synth_block_weighted(state.trajectory.positions[ks],
                             state.deployment.anchors,
                             state.io_positions, state.io_excess,
                             state.io_phases, w,
                             state.k_inst[:, ks].T, state.anchor_phases,
                             state.deployment)
    amp = 10.0 ** ((state.pg_db[:, ks] + state.lsf_db[:, ks]).T / 20.0)
    return h * amp[..., None]


def step(state: SimulationState, k: int) -> np.ndarray:
    """One snapshot of the simulation recipe: anchor distances, link state,
    path gain, correlated shadowing, filtered K and interacting-object
    fading, composed into per-anchor tone vectors (M, F)."""
    if not 0 <= k < state.num_snapshots:
        raise SynthesisError("snapshot index out of range")
    return _synthesize_block(state, np.array([k]))[0]


def generate(config: ModelConfig, deployment: Deployment,
             trajectory: Trajectory, chunk: int = 64) -> ChannelTensor:
    """Initialize and fold :func:`step` over all snapshots.

    The ground-truth side channel (states, shadowing, K per snapshot) is
    attached to the returned tensor for round-trip validation. The payload
    is stored as complex64, matching the tensor file format.
    """
    state = initialize(None, config, deployment, trajectory)
    M, T, F = deployment.num_anchors, trajectory.num_snapshots, deployment.num_tones
    data = np.empty((M, T, F), dtype=np.complex64)
    for start in range(0, T, chunk):
        ks = np.arange(start, min(start + chunk, T))
        block = _synthesize_block(state, ks)                # (B, M, F)
        data[:, ks, :] = block.transpose(1, 0, 2).astype(np.complex64)
    return ChannelTensor(data, deployment, config.seed, state.truth())


@dataclass(eq=False)
class HardeningSummary:
    """ECDF pair of single-anchor and MRT-combined channel gains."""

    single: tuple            # (sorted values, probabilities)
    combined: tuple
    mode: str
    num_anchors: int

    def quantile(self, q: float, which: str = "combined") -> float:
        vals, probs = self.combined if which == "combined" else self.single
        idx = int(np.searchsorted(probs, q, side="left"))
        return float(vals[min(idx, len(vals) - 1)])

    def outage_improvement_db(self, q: float = 0.01) -> float:
        """Gain of the combined curve's q-quantile over the single curve's."""
        lo = self.quantile(q, "single")
        hi = self.quantile(q, "combined")
        return 10.0 * np.log10(hi / lo)


def _decimate(x: np.ndarray, max_samples: int) -> np.ndarray:
    stride = max(1, x.size // max_samples)
    return x.ravel()[::stride]


def hardening_summary(tensor: ChannelTensor, mode: str = "full",
                      window_snapshots: int = 300,
                      max_samples: int = 2_000_000) -> HardeningSummary:
    """Channel-hardening ECDFs: single-anchor gains versus per-tone MRT.

    ``full`` compares raw gains including path gain and shadowing;
    ``ssf_only`` first divides each anchor's gains by its extracted local
    mean power (moving average of the tone-averaged power) and scales the
    MRT sum by 1/M, isolating small-scale fading.
    """
    if mode not in ("full", "ssf_only"):
        raise SynthesisError(f"unknown mode {mode!r}")
    M, T, F = tensor.data.shape
    if M < 2:
        raise SynthesisError("need at least two anchors for the MRT curve")
    power = (tensor.data.real.astype(np.float64) ** 2
             + tensor.data.imag.astype(np.float64) ** 2)    # (M, T, F)
    if mode == "ssf_only":
        w = int(window_snapshots)
        if w > T:
            raise SynthesisError("tensor too short for local-mean extraction")
        pbar = power.mean(axis=2)                           # (M, T)
        csum = np.concatenate([np.zeros((M, 1)), np.cumsum(pbar, axis=1)], axis=1)
        local = (csum[:, w:] - csum[:, :-w]) / w            # (M, T-w+1)
        centers = np.arange(T - w + 1) + (w - 1) // 2
        power = power[:, centers, :] / local[:, :, None]
        combined = power.sum(axis=0) / M
    else:
        combined = power.sum(axis=0)
    single = _decimate(power, max_samples)
    combined = _decimate(combined, max_samples)
    return HardeningSummary(analysis.ecdf(single), analysis.ecdf(combined),
                            mode, M)
