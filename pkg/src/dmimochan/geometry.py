"""Scene geometry: deployment, trajectories, point clouds and the
Fresnel-cylinder obstruction classifier."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

SPEED_OF_LIGHT = 299_792_458.0  # m/s

#: default disc rasterization resolution (cells per side)
DEFAULT_GRID_N = 64

#: default room volume for interacting-object placement, axis-aligned (m)
DEFAULT_ROOM = ((0.0, 30.0), (0.0, 12.0), (0.0, 8.0))


class GeometryError(ValueError):
    pass


class LinkState(IntEnum):
    """Link obstruction state, split at 50 % Fresnel coverage."""

    LOS = 0
    OLOS = 1

    @property
    def label(self) -> str:
        return "LOS" if self is LinkState.LOS else "OLOS"


def fresnel_radius(carrier_freq: float) -> float:
    """Obstruction-cylinder radius, two wavelengths at the carrier (m)."""
    if carrier_freq <= 0:
        raise GeometryError("carrier_freq must be positive")
    return 2.0 * SPEED_OF_LIGHT / carrier_freq


@dataclass(eq=False)
class Deployment:
    """Static scene: anchor positions plus RF numerology.

    Parameters
    ----------
    anchors : (M, 3) array
        Anchor positions in meters.
    carrier_freq : float
        Carrier frequency in Hz.
    num_tones : int
        Number of active tones across the band.
    tone_spacing : float
        Tone spacing in Hz.
    snapshot_rate : float
        Channel snapshots per second.
    room : ((2,), (2,), (2,)) bounds
        Axis-aligned volume used when placing interacting objects (m).
    """

    anchors: np.ndarray
    carrier_freq: float = 3.75e9
    num_tones: int = 449
    tone_spacing: float = 78.125e3
    snapshot_rate: float = 200.0
    room: tuple = DEFAULT_ROOM

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        if self.anchors.ndim != 2 or self.anchors.shape[1] != 3:
            raise GeometryError("anchors must be an (M, 3) array")
        if self.anchors.shape[0] < 1:
            raise GeometryError("need at least one anchor")
        if not np.all(np.isfinite(self.anchors)):
            raise GeometryError("anchor coordinates must be finite")
        if self.carrier_freq <= 0:
            raise GeometryError("carrier_freq must be positive")
        if self.num_tones < 1:
            raise GeometryError("num_tones must be >= 1")
        if self.tone_spacing <= 0:
            raise GeometryError("tone_spacing must be positive")
        if self.snapshot_rate <= 0:
            raise GeometryError("snapshot_rate must be positive")
        room = np.asarray(self.room, dtype=float)
        if room.shape != (3, 2) or np.any(room[:, 1] <= room[:, 0]):
            raise GeometryError("room must be three (lo, hi) bounds")
        self.room = tuple((float(lo), float(hi)) for lo, hi in room)

    @property
    def num_anchors(self) -> int:
        return self.anchors.shape[0]

    @property
    def wavelength(self) -> float:
        """Carrier wavelength (m); always derived, never stored."""
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def bandwidth(self) -> float:
        return self.num_tones * self.tone_spacing

    @property
    def tone_frequencies(self) -> np.ndarray:
        """Baseband tone frequencies (Hz), centered on the carrier."""
        n = np.arange(self.num_tones, dtype=float)
        return (n - (self.num_tones - 1) / 2.0) * self.tone_spacing

    @property
    def delay_resolution(self) -> float:
        """Delay-bin width of the tone-DFT delay axis (s)."""
        return 1.0 / self.bandwidth

    @property
    def snapshot_dt(self) -> float:
        return 1.0 / self.snapshot_rate


@dataclass(eq=False)
class Trajectory:
    """Agent path, one 3-D position per snapshot; timestamps are implied
    as k / snapshot_rate."""

    positions: np.ndarray
    snapshot_rate: float = 200.0
    max_speed: float = 2.0  # m/s, validation bound

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise GeometryError("positions must be a (T, 3) array")
        if self.positions.shape[0] < 2:
            raise GeometryError("trajectory needs at least two snapshots")
        if not np.all(np.isfinite(self.positions)):
            raise GeometryError("positions must be finite")
        if self.snapshot_rate <= 0:
            raise GeometryError("snapshot_rate must be positive")
        speeds = self.speeds
        if np.any(speeds > self.max_speed * (1 + 1e-9)):
            raise GeometryError(
                f"per-snapshot speed exceeds max_speed={self.max_speed} m/s "
                f"(found {speeds.max():.3f})"
            )

    @property
    def num_snapshots(self) -> int:
        return self.positions.shape[0]

    @property
    def step_distances(self) -> np.ndarray:
        """Distance moved since the previous snapshot (m); zero at k = 0."""
        dd = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        return np.concatenate([[0.0], dd])

    @property
    def speeds(self) -> np.ndarray:
        """Per-snapshot speed (m/s); the first entry mirrors the second."""
        v = self.step_distances * self.snapshot_rate
        if v.shape[0] > 1:
            v[0] = v[1]
        return v

    @property
    def cumulative_distance(self) -> np.ndarray:
        return np.cumsum(self.step_distances)

    @property
    def total_distance(self) -> float:
        return float(self.step_distances.sum())

    @classmethod
    def straight_line(cls, start, stop, speed: float, snapshot_rate: float = 200.0,
                      max_speed: float = 2.0) -> "Trajectory":
        """Constant-speed straight pass from start to stop."""
        start = np.asarray(start, dtype=float)
        stop = np.asarray(stop, dtype=float)
        length = float(np.linalg.norm(stop - start))
        if length == 0 or speed <= 0:
            raise GeometryError("degenerate straight-line spec")
        n = max(2, int(round(length / speed * snapshot_rate)) + 1)
        frac = np.linspace(0.0, 1.0, n)[:, None]
        return cls(start + frac * (stop - start), snapshot_rate, max_speed)

    @classmethod
    def waypoint_route(cls, waypoints, speed: float, snapshot_rate: float = 200.0,
                       duration: float | None = None, closed: bool = False,
                       max_speed: float = 2.0) -> "Trajectory":
        """Piecewise-linear route through waypoints at constant speed.

        With ``duration`` set, the route is cycled (or truncated) to that
        many seconds; ``closed`` appends the first waypoint at the end.
        """
        pts = np.atleast_2d(np.asarray(waypoints, dtype=float))
        if closed:
            pts = np.vstack([pts, pts[:1]])
        if pts.shape[0] < 2 or speed <= 0:
            raise GeometryError("need two waypoints and positive speed")
        seg = np.diff(pts, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        if np.any(seg_len == 0):
            raise GeometryError("repeated consecutive waypoints")
        path_len = seg_len.sum()
        arc = np.concatenate([[0.0], np.cumsum(seg_len)])
        if duration is None:
            duration = path_len / speed
        n = max(2, int(round(duration * snapshot_rate)) + 1)
        s = (np.arange(n) / snapshot_rate * speed) % path_len if closed else \
            np.minimum(np.arange(n) / snapshot_rate * speed, path_len)
        pos = np.empty((n, 3))
        idx = np.clip(np.searchsorted(arc, s, side="right") - 1, 0, len(seg_len) - 1)
        frac = (s - arc[idx]) / seg_len[idx]
        pos = pts[idx] + frac[:, None] * seg[idx]
        return cls(pos, snapshot_rate, max_speed)


@dataclass(eq=False)
class PointCloud:
    """Obstacle map abstraction: a bag of 3-D points (m). May be empty."""

    points: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        pts = np.atleast_2d(pts)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise GeometryError("points must be an (N, 3) array")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("points must be finite")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_text(cls, path) -> "PointCloud":
        """Read a plain-text cloud: one point per line, three decimal
        fields, whitespace-separated, '#' comments allowed."""
        pts = []
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 3:
                raise GeometryError(f"{path}:{lineno}: expected three fields")
            try:
                pts.append([float(v) for v in fields])
            except ValueError as exc:
                raise GeometryError(f"{path}:{lineno}: bad number") from exc
        return cls(np.asarray(pts, dtype=float) if pts else np.empty((0, 3)))

    def to_text(self, path) -> None:
        with open(path, "w") as fh:
            for p in self.points:
                fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}\n")


@dataclass(eq=False)
class InteractingObject:
    """Last-bounce scatterer: position plus excess delay, amplitude weight
    and start phase."""

    position: np.ndarray
    excess_delay: float  # s
    weight: float        # amplitude, >= 0
    phase0: float        # rad, in [0, 2*pi)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(self.position)):
            raise GeometryError("IO position must be finite")
        if self.excess_delay < 0:
            raise GeometryError("excess_delay must be >= 0")
        if self.weight < 0:
            raise GeometryError("weight must be >= 0")
        if not (0.0 <= self.phase0 < 2 * np.pi):
            raise GeometryError("phase0 must lie in [0, 2*pi)")


def distance(anchor_idx: int, agent_pos, deployment: Deployment) -> float:
    """Euclidean anchor-agent separation (m)."""
    if not 0 <= anchor_idx < deployment.num_anchors:
        raise GeometryError(f"anchor index {anchor_idx} out of range")
    agent = np.asarray(agent_pos, dtype=float).reshape(3)
    return float(np.linalg.norm(deployment.anchors[anchor_idx] - agent))


def _disc_frame(a: np.ndarray, b: np.ndarray):
    """Orthonormal (axis, e1, e2) frame of the link cylinder.

    The frame depends only on the unordered endpoint pair, which makes the
    coverage rasterization invariant under swapping anchor and agent.
    """
    lo, hi = sorted((tuple(a), tuple(b)))
    axis = np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)
    axis /= np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0])
    if abs(axis @ helper) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return np.asarray(lo, dtype=float), axis, e1, e2


def fresnel_coverage(anchor_pos, agent_pos, cloud: PointCloud, radius: float,
                     grid_n: int = DEFAULT_GRID_N) -> float:
    """Fraction of the link disc occupied by projected obstacle points (%).

    Cloud points closer than ``radius`` to the anchor-agent segment (with
    projection parameter strictly inside the segment) are projected onto a
    common disc perpendicular to the link. The disc is rasterized into
    ``grid_n`` x ``grid_n`` cells and the share of occupied in-disc cells is
    returned in [0, 100].
    """
    a = np.asarray(anchor_pos, dtype=float).reshape(3)
    b = np.asarray(agent_pos, dtype=float).reshape(3)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise GeometryError("endpoint coordinates must be finite")
    link = np.linalg.norm(b - a)
    if link == 0:
        raise GeometryError("anchor and agent positions coincide")
    if radius <= 0:
        raise GeometryError("radius must be positive")
    if grid_n < 8:
        raise GeometryError("grid_n must be >= 8")

    cell = 2.0 * radius / grid_n
    centers = (np.arange(grid_n) + 0.5) * cell - radius
    in_disc = centers[:, None] ** 2 + centers[None, :] ** 2 <= radius ** 2

    pts = cloud.points
    if len(pts) == 0:
        return 0.0

    base, axis, e1, e2 = _disc_frame(a, b)
    rel = pts - base
    t = rel @ axis / link
    perp = rel - np.outer(rel @ axis, axis)
    d2 = np.einsum("ij,ij->i", perp, perp)
    sel = (t > 0.0) & (t < 1.0) & (d2 < radius ** 2)
    if not np.any(sel):
        return 0.0

    u = perp[sel] @ e1
    v = perp[sel] @ e2
    iu = np.clip(((u + radius) / cell).astype(int), 0, grid_n - 1)
    iv = np.clip(((v + radius) / cell).astype(int), 0, grid_n - 1)
    occupied = np.zeros((grid_n, grid_n), dtype=bool)
    occupied[iu, iv] = True
    return 100.0 * np.count_nonzero(occupied & in_disc) / np.count_nonzero(in_disc)


def classify_state(coverage: float) -> LinkState:
    """LoS iff coverage <= 50 %, OLoS otherwise."""
    if not 0.0 <= coverage <= 100.0:
        raise GeometryError("coverage must lie in [0, 100]")
    return LinkState.LOS if coverage <= 50.0 else LinkState.OLOS


def weighted_rms_spread(delays, powers, extra_delay: float | None = None,
                        extra_power: float = 0.0) -> float:
    """RMS spread (s) of a discrete power-delay profile, optionally with
    one extra tap (used for the direct-path component)."""
    tau = np.asarray(delays, dtype=float)
    p = np.asarray(powers, dtype=float)
    if extra_delay is not None and extra_power > 0:
        tau = np.concatenate([[extra_delay], tau])
        p = np.concatenate([[extra_power], p])
    total = p.sum()
    if total <= 0:
        raise GeometryError("profile has no power")
    mean = (p * tau).sum() / total
    return float(np.sqrt((p * (tau - mean) ** 2).sum() / total))


def shape_exponential_weights(delays, target_rms_ds: float, *,
                              direct_delay: float | None = None,
                              direct_power: float = 0.0) -> np.ndarray:
    """Power weights (summing to one) giving a delay profile with RMS
    spread ``target_rms_ds``.

    The weights follow an exponential-in-delay law ``p_i ~ exp(theta*tau_i)``
    whose tilt ``theta`` is solved so the resulting spread matches the
    target exactly. With ``direct_delay``/``direct_power`` given, the solved
    spread is that of the composite profile including a fixed direct tap of
    the stated power fraction; the returned weights still sum to one over
    the diffuse taps alone. Degenerate delay sets (or unreachable targets)
    fall back to equal weights.
    """
    tau = np.asarray(delays, dtype=float)
    if tau.ndim != 1 or tau.size < 1:
        raise GeometryError("delays must be a non-empty vector")
    if target_rms_ds <= 0:
        raise GeometryError("target_rms_ds must be positive")
    if not 0.0 <= direct_power < 1.0:
        raise GeometryError("direct_power must lie in [0, 1)")
    n = tau.size
    scale = tau.std()
    if scale == 0 and (direct_delay is None or direct_power == 0.0 or
                       np.allclose(tau, direct_delay)):
        return np.full(n, 1.0 / n)

    centered = tau - tau.mean()
    ref = max(scale, 1e-12)

    def spread(theta: float) -> float:
        expo = np.clip(theta * centered, -700.0, 700.0)
        q = np.exp(expo)
        p = q / q.sum() * (1.0 - direct_power)
        return weighted_rms_spread(tau, p, direct_delay, direct_power)

    def gap(theta: float) -> float:
        return spread(theta) - target_rms_ds

    thetas = np.concatenate([-np.geomspace(40.0, 1e-3, 60), [0.0],
                             np.geomspace(1e-3, 40.0, 60)]) / ref
    gaps = np.array([gap(th) for th in thetas])
    sign_change = np.nonzero(np.diff(np.sign(gaps)) != 0)[0]
    if sign_change.size == 0:
        # target unreachable for this draw; use the closest achievable tilt
        theta = thetas[int(np.argmin(np.abs(gaps)))]
    else:
        # prefer the mildest tilt so the profile stays well populated
        best = sign_change[int(np.argmin(np.abs(thetas[sign_change])))]
        theta = brentq(gap, thetas[best], thetas[best + 1], xtol=1e-12 / ref)
    expo = np.clip(theta * centered, -700.0, 700.0)
    q = np.exp(expo)
    return q / q.sum()


def place_interacting_objects(rng: np.random.Generator, deployment: Deployment,
                              anchor_idx: int, n_io: int,
                              target_rms_ds: float) -> list[InteractingObject]:
    """Realize interacting objects for one anchor.

    Positions are uniform in the deployment room, excess delays are i.i.d.
    exponential with mean ``target_rms_ds``, and amplitude weights are
    shaped deterministically so the excess-delay power profile is
    exponential with RMS spread ``target_rms_ds`` (sum of squared weights
    is one).
    """
    if not 0 <= anchor_idx < deployment.num_anchors:
        raise GeometryError(f"anchor index {anchor_idx} out of range")
    if n_io < 2:
        raise GeometryError("need at least two interacting objects")
    if target_rms_ds <= 0:
        raise GeometryError("target_rms_ds must be positive")
    room = np.asarray(deployment.room, dtype=float)
    pos = rng.uniform(room[:, 0], room[:, 1], size=(n_io, 3))
    excess = rng.exponential(target_rms_ds, size=n_io)
    phases = rng.uniform(0.0, 2 * np.pi, size=n_io)
    power = shape_exponential_weights(excess, target_rms_ds)
    weights = np.sqrt(power)
    return [
        InteractingObject(pos[i], float(excess[i]), float(weights[i]), float(phases[i]))
        for i in range(n_io)
    ]
