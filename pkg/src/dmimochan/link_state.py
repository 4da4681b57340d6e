"""Two-state LoS/OLoS link process: exponential-distance transitions for
generation and rate estimation for analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import LinkState, Trajectory, classify_state

#: uniform bounds of the per-anchor transition rate (transitions/m)
DEFAULT_RATE_BOUNDS = (0.04, 0.22)


class LinkStateError(ValueError):
    pass


@dataclass(eq=False)
class LinkStateTrace:
    """Per-anchor, per-snapshot link-state labels, optionally with the
    Fresnel coverage they were classified from."""

    states: np.ndarray                 # (M, T) of LinkState values
    coverage: np.ndarray | None = None  # (M, T) percent, optional

    def __post_init__(self):
        self.states = np.asarray(self.states)
        if self.states.ndim != 2:
            raise LinkStateError("states must be an (M, T) array")
        if not np.isin(self.states, (LinkState.LOS, LinkState.OLOS)).all():
            raise LinkStateError("states must be LinkState values")
        self.states = self.states.astype(np.int8)
        if self.coverage is not None:
            self.coverage = np.asarray(self.coverage, dtype=float)
            if self.coverage.shape != self.states.shape:
                raise LinkStateError("coverage shape must match states")
            expect = np.where(self.coverage <= 50.0, LinkState.LOS, LinkState.OLOS)
            if not np.array_equal(expect.astype(np.int8), self.states):
                raise LinkStateError("coverage and states disagree")

    @property
    def num_anchors(self) -> int:
        return self.states.shape[0]

    @property
    def num_snapshots(self) -> int:
        return self.states.shape[1]


@dataclass(eq=False)
class TransitionModel:
    """Per-anchor transition rate (transitions per meter traveled); the
    same rate drives both LoS->OLoS and OLoS->LoS."""

    rates: np.ndarray
    rate_bounds: tuple = DEFAULT_RATE_BOUNDS

    def __post_init__(self):
        self.rates = np.atleast_1d(np.asarray(self.rates, dtype=float))
        lo, hi = self.rate_bounds
        if np.any(self.rates < lo - 1e-12) or np.any(self.rates > hi + 1e-12):
            raise LinkStateError(f"rates must lie in [{lo}, {hi}]")

    @property
    def num_anchors(self) -> int:
        return self.rates.shape[0]


def draw_transition_model(rng: np.random.Generator, num_anchors: int,
                          bounds: tuple = DEFAULT_RATE_BOUNDS) -> TransitionModel:
    """Draw i.i.d. uniform per-anchor transition rates."""
    if num_anchors < 1:
        raise LinkStateError("num_anchors must be >= 1")
    lo, hi = bounds
    if hi < lo:
        raise LinkStateError("invalid rate bounds")
    return TransitionModel(rng.uniform(lo, hi, size=num_anchors), (lo, hi))


def simulate_states(rng: np.random.Generator, model: TransitionModel,
                    trajectory: Trajectory,
                    initial: np.ndarray | None = None) -> LinkStateTrace:
    """Simulate the two-state process along a trajectory.

    The per-snapshot transition probability is ``1 - exp(-rate * dd_k)``
    with ``dd_k`` the distance moved since the previous snapshot, so run
    lengths between transitions are exponential in meters traveled and the
    process is invariant to snapshot-rate resampling. Each anchor consumes
    its own child stream of ``rng``, making parallel and serial evaluation
    agree. Without ``initial``, starting states are drawn 50/50.
    """
    M = model.num_anchors
    T = trajectory.num_snapshots
    dd = trajectory.step_distances[1:]
    if initial is not None:
        initial = np.asarray(initial)
        if initial.shape != (M,):
            raise LinkStateError("initial must hold one state per anchor")
    states = np.empty((M, T), dtype=np.int8)
    for m, stream in enumerate(rng.spawn(M)):
        if initial is None:
            start = LinkState.LOS if stream.random() < 0.5 else LinkState.OLOS
        else:
            start = LinkState(int(initial[m]))
        p = -np.expm1(-model.rates[m] * dd)
        flips = stream.random(T - 1) < p
        parity = np.concatenate([[0], np.cumsum(flips) & 1])
        states[m] = np.where(parity, 1 - int(start), int(start))
    return LinkStateTrace(states)


def estimate_transition_rate(trace: LinkStateTrace,
                             trajectory: Trajectory) -> np.ndarray:
    """Label changes per meter traveled, per anchor."""
    if trace.num_snapshots < 2:
        raise LinkStateError("need at least two snapshots")
    total = trajectory.total_distance
    if total == 0:
        raise LinkStateError("total distance traveled is zero")
    changes = np.count_nonzero(np.diff(trace.states, axis=1) != 0, axis=1)
    return changes / total


def run_lengths(trace: LinkStateTrace, trajectory: Trajectory,
                state: LinkState | None = None) -> np.ndarray:
    """Complete run lengths in meters pooled over anchors.

    Runs censored by the start or end of the record are dropped. With
    ``state`` given, only runs spent in that state are returned.
    """
    cum = trajectory.cumulative_distance
    out = []
    for m in range(trace.num_anchors):
        s = trace.states[m]
        flips = np.nonzero(np.diff(s) != 0)[0] + 1  # snapshot where new run starts
        if flips.size < 2:
            continue
        starts = cum[flips]
        lengths = np.diff(starts)
        if state is not None:
            keep = s[flips[:-1]] == int(state)
            lengths = lengths[keep]
        out.append(lengths)
    return np.concatenate(out) if out else np.empty(0)


def count_los_links(trace: LinkStateTrace) -> np.ndarray:
    """Number of anchors in LoS at each snapshot."""
    return np.count_nonzero(trace.states == LinkState.LOS, axis=0)


def write_trace_csv(trace: LinkStateTrace, path) -> None:
    """Export as CSV with header ``snapshot,anchor,state,coverage``."""
    with open(path, "w") as fh:
        fh.write("snapshot,anchor,state,coverage\n")
        for k in range(trace.num_snapshots):
            for m in range(trace.num_anchors):
                label = LinkState(int(trace.states[m, k])).label
                cov = "" if trace.coverage is None else f"{trace.coverage[m, k]:.3f}"
                fh.write(f"{k},{m},{label},{cov}\n")


def read_trace_csv(path) -> LinkStateTrace:
    """Read a trace written by :func:`write_trace_csv`."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header.split(",")[:3] != ["snapshot", "anchor", "state"]:
            raise LinkStateError(f"{path}: unexpected trace header")
        for line in fh:
            if line.strip():
                rows.append(line.strip().split(","))
    if not rows:
        raise LinkStateError(f"{path}: empty trace")
    ks = np.array([int(r[0]) for r in rows])
    ms = np.array([int(r[1]) for r in rows])
    M, T = ms.max() + 1, ks.max() + 1
    states = np.zeros((M, T), dtype=np.int8)
    coverage = np.full((M, T), np.nan)
    have_cov = False
    for r in rows:
        k, m = int(r[0]), int(r[1])
        states[m, k] = LinkState.LOS if r[2] == "LOS" else LinkState.OLOS
        if len(r) > 3 and r[3] != "":
            coverage[m, k] = float(r[3])
            have_cov = True
    return LinkStateTrace(states, coverage if have_cov else None)
