"""Fading-memory phase space for infinite-delay functional equations.

State histories live on (-inf, 0] and are measured with the weighted sup
norm ``sup_{theta <= 0} e^{q theta} |psi(theta)|`` for a decay rate q > 0.
The exponential weight makes the neglected tail of a truncated history
analytically controllable, so a segment is represented by its values on a
uniform grid over [-tau_trunc, 0] plus a certified bound on the tail
contribution to the norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PhaseSpaceError",
    "HistorySegment",
    "InitialData",
    "fading_norm",
    "segment_at",
    "segment_norm_series",
    "truncation_error",
    "default_truncation",
]


class PhaseSpaceError(ValueError):
    """Raised for malformed segments or off-grid requests."""


def _as_state_array(values) -> np.ndarray:
    """Coerce to float array of shape (n_points, state_dim)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise PhaseSpaceError("segment values must be 1-d or 2-d")
    return arr


@dataclass(frozen=True)
class HistorySegment:
    """A history fragment on [-tau_trunc, 0], sampled on a uniform grid.

    ``values[j]`` is the state at theta_j = -tau_trunc + j*dt, so the last
    row is the present value psi(0).  ``tail_bound`` is an upper bound on
    ``sup_{theta <= -tau_trunc} e^{q theta} |psi(theta)|`` for the function
    the segment represents; it participates in the norm so truncation never
    silently shrinks it.
    """

    values: np.ndarray
    q: float
    dt: float
    tail_bound: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _as_state_array(self.values))
        if self.values.shape[0] == 0:
            raise PhaseSpaceError("degenerate segment: no grid points")
        if self.q <= 0.0:
            raise PhaseSpaceError("decay rate q must be positive")
        if self.dt <= 0.0 and self.values.shape[0] > 1:
            raise PhaseSpaceError("grid step dt must be positive")
        if self.tail_bound < 0.0:
            raise PhaseSpaceError("tail_bound must be nonnegative")

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    @property
    def state_dim(self) -> int:
        return self.values.shape[1]

    @property
    def tau_trunc(self) -> float:
        return (self.n_points - 1) * self.dt

    @property
    def thetas(self) -> np.ndarray:
        """Grid points theta_j in [-tau_trunc, 0], increasing."""
        return (np.arange(self.n_points) - (self.n_points - 1)) * self.dt

    # -- feature interface shared with the solver's precomputed views -----

    @property
    def head(self) -> np.ndarray:
        """psi(0) as a vector of shape (state_dim,)."""
        return self.values[-1]

    def delayed(self, tau: float) -> np.ndarray:
        """psi(-tau) at the nearest grid point."""
        if tau < 0.0:
            raise PhaseSpaceError("delay must be nonnegative")
        j = (self.n_points - 1) - int(round(tau / self.dt)) if self.dt > 0 else 0
        if j < 0:
            raise PhaseSpaceError(
                f"delay {tau} exceeds truncation horizon {self.tau_trunc}"
            )
        return self.values[j]

    def fading_average(self) -> np.ndarray:
        """Riemann sum of q e^{q theta} psi(theta) over the grid.

        The weight integrates to 1 - e^{-q tau_trunc}, so the average of a
        constant history c is close to c for long windows.
        """
        w = self.q * np.exp(self.q * self.thetas) * self.dt
        return w @ self.values

    def fading_norm(self) -> float:
        return fading_norm(self)

    def scaled(self, c: float) -> "HistorySegment":
        return HistorySegment(self.values * c, self.q, self.dt,
                              abs(c) * self.tail_bound)

    def __add__(self, other: "HistorySegment") -> "HistorySegment":
        if self.values.shape != other.values.shape or self.dt != other.dt:
            raise PhaseSpaceError("segment shape/grid mismatch")
        return HistorySegment(self.values + other.values, self.q, self.dt,
                              self.tail_bound + other.tail_bound)

    def __sub__(self, other: "HistorySegment") -> "HistorySegment":
        return self + other.scaled(-1.0)


def fading_norm(seg: HistorySegment) -> float:
    """Weighted sup norm: max over the grid of e^{q theta}|psi(theta)|,
    floored by the certified tail bound.

    Monotone nonincreasing in q for a fixed history, and attains the plain
    sup at theta = 0 for histories that decay into the past.
    """
    w = np.exp(seg.q * seg.thetas)
    mags = np.linalg.norm(seg.values, axis=1)
    return float(max(np.max(w * mags), seg.tail_bound))


# ---------------------------------------------------------------------------
# Initial data catalog
# ---------------------------------------------------------------------------

_KINDS = ("const", "exp", "polyexp")


@dataclass(frozen=True)
class InitialData:
    """Closed-form initial history zeta(theta), theta <= 0.

    Three catalog rules, addressable by string id:

    * ``const:v[,v2,...]``     zeta(theta) = v (componentwise)
    * ``exp:c`` / ``exp:c:A``  zeta(theta) = A e^{c theta}, requires c > -q
    * ``polyexp:a0,a1,...:c``  zeta(theta) = (a0 + a1 theta + ...) e^{c theta}

    Each rule has a closed-form tail bound, so truncating the infinite
    window is certified rather than heuristic.  All entries are
    deterministic (seed independent).
    """

    kind: str
    params: tuple
    q: float
    spec_id: str = field(default="", compare=False)

    def __post_init__(self):
        if self.q <= 0.0:
            raise PhaseSpaceError("decay rate q must be positive")
        if self.kind not in _KINDS:
            raise PhaseSpaceError(f"unknown initial-data kind {self.kind!r}")
        if self.kind == "exp" and self.params[0] <= -self.q:
            raise PhaseSpaceError(
                "exp rate must exceed -q for the weighted norm to be finite"
            )
        if self.kind == "polyexp" and self.params[1] <= -self.q:
            raise PhaseSpaceError(
                "polyexp rate must exceed -q for the weighted norm to be finite"
            )

    @classmethod
    def from_id(cls, spec_id: str, q: float) -> "InitialData":
        """Parse catalog ids like ``const:1.0``, ``exp:-0.5``,
        ``polyexp:0,-1:0.0``."""
        parts = spec_id.split(":")
        kind = parts[0]
        try:
            if kind == "const":
                vec = tuple(float(s) for s in parts[1].split(","))
                return cls("const", vec, q, spec_id)
            if kind == "exp":
                c = float(parts[1])
                amp = float(parts[2]) if len(parts) > 2 else 1.0
                return cls("exp", (c, amp), q, spec_id)
            if kind == "polyexp":
                coeffs = tuple(float(s) for s in parts[1].split(","))
                c = float(parts[2]) if len(parts) > 2 else 0.0
                return cls("polyexp", (coeffs, c), q, spec_id)
        except (IndexError, ValueError) as exc:
            raise PhaseSpaceError(f"cannot parse initial data id {spec_id!r}") from exc
        raise PhaseSpaceError(f"unknown initial-data kind {kind!r}")

    @property
    def state_dim(self) -> int:
        return len(self.params) if self.kind == "const" else 1

    def value(self, theta) -> np.ndarray:
        """zeta(theta); theta scalar or array (<= 0), returns (..., state_dim)."""
        th = np.asarray(theta, dtype=float)
        if self.kind == "const":
            out = np.broadcast_to(np.asarray(self.params, float),
                                  th.shape + (self.state_dim,))
            return out.copy()
        if self.kind == "exp":
            c, amp = self.params
            return (amp * np.exp(c * th))[..., None]
        coeffs, c = self.params
        poly = np.polynomial.polynomial.polyval(th, np.asarray(coeffs, float))
        return (poly * np.exp(c * th))[..., None]

    def zeta0(self) -> np.ndarray:
        return self.value(0.0)

    def tail_bound(self, tau: float) -> float:
        """Closed-form upper bound on sup_{theta <= -tau} e^{q theta}|zeta|.

        At tau = 0 this bounds the full norm; it decreases in tau and
        vanishes as tau -> inf for every catalog rule.
        """
        if tau < 0.0:
            raise PhaseSpaceError("tau must be nonnegative")
        if self.kind == "const":
            mag = float(np.linalg.norm(self.params))
            return mag * math.exp(-self.q * tau)
        if self.kind == "exp":
            c, amp = self.params
            return abs(amp) * math.exp(-(self.q + c) * tau)
        coeffs, c = self.params
        rate = self.q + c
        # e^{-rate*s} s^j on s >= tau peaks at s = j/rate, decays beyond.
        total = 0.0
        for j, a in enumerate(coeffs):
            if a == 0.0:
                continue
            if j == 0:
                total += abs(a) * math.exp(-rate * tau)
            elif tau >= j / rate:
                total += abs(a) * math.exp(-rate * tau) * tau ** j
            else:
                total += abs(a) * (j / (math.e * rate)) ** j
        return total

    def norm_upper(self, grid_points: int = 20001) -> float:
        """Upper bound on the weighted norm of zeta, tight for the catalog.

        Exact for const and exp rules; for polyexp the grid maximum over a
        window that provably contains the maximizer is combined with the
        analytic tail bound.
        """
        if self.kind == "const":
            return float(np.linalg.norm(self.params))
        if self.kind == "exp":
            return abs(self.params[1])
        coeffs, c = self.params
        rate = self.q + c
        deg = len(coeffs) - 1
        tau_star = max(2.0 * (deg + 1) / rate, 1.0)
        th = np.linspace(-tau_star, 0.0, grid_points)
        vals = np.exp(self.q * th) * np.abs(self.value(th)[:, 0])
        return float(max(np.max(vals), self.tail_bound(tau_star)))

    def to_segment(self, tau_trunc: float, dt: float) -> HistorySegment:
        """Sample zeta on the truncation window, carrying its tail bound."""
        m = int(round(tau_trunc / dt))
        if m < 0 or abs(m * dt - tau_trunc) > 1e-9 * max(dt, 1.0):
            raise PhaseSpaceError("tau_trunc must be a multiple of dt")
        thetas = (np.arange(m + 1) - m) * dt
        return HistorySegment(self.value(thetas), self.q, dt,
                              self.tail_bound(tau_trunc))


def truncation_error(zeta: InitialData, tau_trunc: float) -> float:
    """Analytic bound on the norm contribution neglected by truncating the
    history window at tau_trunc."""
    if tau_trunc <= 0.0:
        raise PhaseSpaceError("tau_trunc must be positive")
    return zeta.tail_bound(tau_trunc)


def default_truncation(zeta: InitialData, dt: float,
                       rel_tol: float = 1e-8) -> float:
    """Smallest grid-aligned window with truncation_error <= rel_tol * norm.

    The exponential weight makes the tail bound decay at rate q (or faster),
    so the search doubles the window and then bisects down to grid steps.
    """
    target = rel_tol * zeta.norm_upper()
    if target <= 0.0:
        return dt
    tau = dt
    while zeta.tail_bound(tau) > target and tau < 1e6:
        tau *= 2.0
    lo_steps, hi_steps = 1, int(round(tau / dt))
    while lo_steps < hi_steps:
        mid = (lo_steps + hi_steps) // 2
        if zeta.tail_bound(mid * dt) <= target:
            hi_steps = mid
        else:
            lo_steps = mid + 1
    return hi_steps * dt


# ---------------------------------------------------------------------------
# Segment extraction from solution paths
# ---------------------------------------------------------------------------

def segment_at(path_values: np.ndarray, times: np.ndarray, zeta: InitialData,
               t: float, tau_trunc: float) -> HistorySegment:
    """History segment of a solution path at a grid time t.

    The window [t - tau_trunc, t] is stitched from solution values where
    t + theta >= 0 and from zeta elsewhere, on the solver grid (no
    interpolation).  The tail bound covers both the pre-window part of the
    solution (discounted by e^{-q tau_trunc}) and the remaining zeta tail.
    """
    path = _as_state_array(path_values)
    times = np.asarray(times, dtype=float)
    if path.shape[0] != times.shape[0]:
        raise PhaseSpaceError("path and time grid length mismatch")
    dt = float(times[1] - times[0]) if len(times) > 1 else tau_trunc
    idx = (t - times[0]) / dt
    i = int(round(idx))
    if not (0 <= i < len(times)) or abs(idx - i) > 1e-9:
        raise PhaseSpaceError(f"off-grid segment request: t={t}")
    m = int(round(tau_trunc / dt))
    if abs(m * dt - tau_trunc) > 1e-9 * max(dt, 1.0):
        raise PhaseSpaceError("tau_trunc must be a multiple of the grid step")

    # window point j holds the state at t + theta_j, theta_j = (j - m) dt
    sol_lo = max(0, m - i)                      # first j taken from the path
    vals = np.empty((m + 1, path.shape[1]))
    if sol_lo > 0:
        thetas_zeta = (np.arange(sol_lo) - m) * dt + i * dt
        vals[:sol_lo] = zeta.value(thetas_zeta)
    vals[sol_lo:] = path[i - (m - sol_lo): i + 1]

    q = zeta.q
    tail = math.exp(-q * i * dt) * zeta.tail_bound(max(tau_trunc - i * dt, 0.0))
    if i > m:
        pre = np.linalg.norm(path[: i - m], axis=1).max()
        tail = max(tail, math.exp(-q * tau_trunc) * float(pre))
    return HistorySegment(vals, q, dt, tail)


def segment_norm_series(path_values: np.ndarray, zeta: InitialData,
                        dt: float, tau_trunc: float) -> np.ndarray:
    """Fading norms of segment_at(t_i) for every grid index i, vectorized.

    Works on a single path (N+1, n) or a batch (..., N+1, n) and returns
    norms of shape (..., N+1).  Uses running maxima in log space; agrees
    with per-time segment extraction up to float rounding.

    Restricted to horizons T <= tau_trunc (always the case for the default
    certified truncation at desk scale), where no solution value ever
    leaves the window.
    """
    path = np.asarray(path_values, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    n_times = path.shape[-2]
    if (n_times - 1) * dt > tau_trunc + 1e-9:
        raise PhaseSpaceError("segment_norm_series requires T <= tau_trunc")
    q = zeta.q
    t_grid = np.arange(n_times) * dt
    mags = np.linalg.norm(path, axis=-1)

    # solution part: max_{r <= i} e^{q(r-i)dt}|y_r| as a cumulative max of
    # q r dt + log|y_r|, discounted by q i dt afterwards
    with np.errstate(divide="ignore"):
        log_mags = np.log(mags)
    run = np.maximum.accumulate(q * t_grid + log_mags, axis=-1)
    sol_part = np.exp(run - q * t_grid)

    # zeta part: e^{-q t_i} * sup over the still-visible zeta grid points,
    # precomputed as a suffix maximum over s = -m..-1
    m = int(round(tau_trunc / dt))
    s_thetas = (np.arange(m) - m) * dt
    zeta_w = np.exp(q * s_thetas) * np.linalg.norm(zeta.value(s_thetas), axis=-1)
    suffix = np.maximum.accumulate(zeta_w[::-1])[::-1]
    suffix = np.append(suffix, 0.0)
    start = np.minimum(np.arange(n_times), m)
    zeta_part = np.exp(-q * t_grid) * suffix[start]

    tails = np.array([
        math.exp(-q * t_grid[i]) * zeta.tail_bound(max(tau_trunc - t_grid[i], 0.0))
        for i in range(n_times)
    ])
    return np.maximum(np.maximum(sol_part, zeta_part), tails)


def segment_tail_series(path_values: np.ndarray, zeta: InitialData,
                        dt: float, tau_trunc: float) -> np.ndarray:
    """Tail bounds of segment_at(t_i) for every grid index i (T <= tau_trunc)."""
    path = np.asarray(path_values, dtype=float)
    n_times = path.shape[-2] if path.ndim > 1 else path.shape[0]
    if (n_times - 1) * dt > tau_trunc + 1e-9:
        raise PhaseSpaceError("segment_tail_series requires T <= tau_trunc")
    q = zeta.q
    return np.array([
        math.exp(-q * i * dt) * zeta.tail_bound(max(tau_trunc - i * dt, 0.0))
        for i in range(n_times)
    ])
