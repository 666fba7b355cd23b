"""Coefficient functionals on history segments and condition checkers.

A problem is a triple (f, g, h) of functionals of (t, history segment)
driving state, quadratic-variation and noise channels respectively.  The
monotone growth/one-sided-difference conditions the solver relies on
quantify over an infinite-dimensional space, so they are verified by
randomized sampling over a bounded norm ball plus per-entry analytic
notes; the checkers report the worst observed ratio with a witness, and a
verdict against the constant the entry declares.

Functionals access the history only through the shared feature interface
(head, point delay, fading average), so the same entry runs on explicit
segments, sampler batches and the solver's precomputed feature views.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .phase_space import HistorySegment

__all__ = [
    "CoefficientError",
    "KappaFunction",
    "CoefficientTriple",
    "ConditionReport",
    "SegmentBatch",
    "SegmentSampler",
    "PairSampler",
    "evaluate",
    "check_H1",
    "check_H2",
    "check_A1_A2",
    "catalog_ids",
    "build_problem",
]

PASS_SLACK = 1e-9       # verdict passes iff worst ratio <= 1 + PASS_SLACK


class CoefficientError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Concave moduli for the weak-monotonicity condition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KappaFunction:
    """Concave nondecreasing modulus with kappa(0) = 0 and a divergent
    integral of 1/kappa at 0+ (so the comparison bound cannot escape).

    rules:
      linear       kappa(u) = scale * u
      log-modulus  kappa(u) = scale * u * ln(e + 1/u)

    Both satisfy kappa(z) <= a + b z with the affine envelope exposed as
    attributes (for the log rule the excess u(ln(e + 1/u) - 1) increases
    to 1/e, hence a = scale/e).
    """

    rule: str
    scale: float = 1.0

    def __post_init__(self):
        if self.rule not in ("linear", "log-modulus"):
            raise CoefficientError(f"unknown kappa rule {self.rule!r}")
        if self.scale <= 0.0:
            raise CoefficientError("kappa scale must be positive")

    @property
    def a(self) -> float:
        return 0.0 if self.rule == "linear" else self.scale / math.e

    @property
    def b(self) -> float:
        return self.scale

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise CoefficientError("kappa argument must be nonnegative")
        if self.rule == "linear":
            return self.scale * u
        safe = np.where(u > 0, u, 1.0)
        out = self.scale * safe * np.log(math.e + 1.0 / safe)
        return np.where(u > 0, out, 0.0)


# ---------------------------------------------------------------------------
# Coefficient triples
# ---------------------------------------------------------------------------

def _zero_fn(t, seg):
    return np.zeros_like(seg.head)


@dataclass(frozen=True)
class CoefficientTriple:
    """The functionals (f, g, h) plus declared condition constants.

    ``declared_K`` / ``declared_Khat`` are the constants the entry claims
    for the growth and one-sided-difference conditions; ``expected_failures``
    names the checks a deliberate counterexample entry is built to fail.
    ``delays``/``uses_fading`` let the solver precompute exactly the history
    features the functionals read.
    """

    label: str
    f: callable = _zero_fn
    g: callable = _zero_fn
    h: callable = _zero_fn
    state_dim: int = 1
    delays: tuple = ()
    uses_fading: bool = False
    declared_K: float | None = None
    declared_Khat: float | None = None
    kappa: KappaFunction | None = None
    declared_Ktilde: float | None = None
    expected_failures: frozenset = frozenset()
    default_initial: str = "const:1.0"

    def with_(self, **kw) -> "CoefficientTriple":
        return replace(self, **kw)


def evaluate(coeff: CoefficientTriple, t, seg) -> tuple:
    """Evaluate (f, g, h) at one (t, segment); errors on non-finite output."""
    out = []
    for name, fn in (("f", coeff.f), ("g", coeff.g), ("h", coeff.h)):
        val = np.asarray(fn(t, seg), dtype=float)
        if not np.all(np.isfinite(val)):
            raise CoefficientError(
                f"non-finite {name} value for entry {coeff.label!r} at "
                f"t={t}, head={np.asarray(seg.head)}")
        out.append(val)
    return tuple(out)


# ---------------------------------------------------------------------------
# Segment batches and samplers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentBatch:
    """A batch of history segments on one common grid, feature-addressable."""

    values: np.ndarray        # (B, L, n)
    q: float
    dt: float
    tails: np.ndarray         # (B,)

    @property
    def n_points(self) -> int:
        return self.values.shape[1]

    @property
    def thetas(self) -> np.ndarray:
        L = self.n_points
        return (np.arange(L) - (L - 1)) * self.dt

    @property
    def head(self) -> np.ndarray:
        return self.values[:, -1, :]

    def delayed(self, tau: float) -> np.ndarray:
        j = (self.n_points - 1) - int(round(tau / self.dt))
        if j < 0:
            raise CoefficientError(f"delay {tau} outside segment window")
        return self.values[:, j, :]

    def fading_average(self) -> np.ndarray:
        w = self.q * np.exp(self.q * self.thetas) * self.dt
        return np.einsum("l,bln->bn", w, self.values)

    def grid_norms(self) -> np.ndarray:
        """Weighted sup over the grid alone (no tail floor)."""
        w = np.exp(self.q * self.thetas)
        mags = np.linalg.norm(self.values, axis=2)
        return np.max(w * mags, axis=1)

    def fading_norms(self) -> np.ndarray:
        return np.maximum(self.grid_norms(), self.tails)

    def __sub__(self, other: "SegmentBatch") -> "SegmentBatch":
        return SegmentBatch(self.values - other.values, self.q, self.dt,
                            self.tails + other.tails)

    def segment(self, b: int) -> HistorySegment:
        return HistorySegment(self.values[b], self.q, self.dt,
                              float(self.tails[b]))


def zero_segment(q: float, tau: float, dt: float, state_dim: int = 1
                 ) -> HistorySegment:
    m = int(round(tau / dt))
    return HistorySegment(np.zeros((m + 1, state_dim)), q, dt, 0.0)


@dataclass(frozen=True)
class SegmentSampler:
    """Random histories psi(theta) = sum_j a_j e^{q theta / 2} cos(w_j theta),
    rescaled to a norm drawn log-uniformly up to ``radius``.

    The envelope e^{q theta / 2} keeps the weighted norm finite with the
    certified tail A e^{-3 q tau / 2}; frequencies up to ``omega_max`` give
    genuinely history-dependent profiles.  The grid step 1/16 keeps unit
    point delays exactly on-grid.
    """

    q: float
    tau: float
    radius: float = 10.0
    dtheta: float = 1.0 / 16.0
    state_dim: int = 1
    n_terms: int = 4
    omega_max: float = 8.0
    t_horizon: float = 1.0
    radius_decades: float = 4.0

    def _profiles(self, rng, count: int) -> SegmentBatch:
        m = int(math.ceil(self.tau / self.dtheta))
        thetas = (np.arange(m + 1) - m) * self.dtheta
        a = rng.standard_normal((count, self.n_terms, self.state_dim))
        w = rng.uniform(0.0, self.omega_max, (count, self.n_terms))
        env = np.exp(self.q * thetas / 2.0)
        waves = np.cos(w[:, :, None] * thetas[None, None, :])   # (B, J, L)
        vals = np.einsum("bjn,bjl->bln", a, waves * env[None, None, :])
        amp = np.linalg.norm(np.sum(np.abs(a), axis=1), axis=1)
        tails = amp * math.exp(-1.5 * self.q * m * self.dtheta)
        return SegmentBatch(vals, self.q, self.dtheta, tails)

    def _rescaled(self, rng, count: int) -> SegmentBatch:
        batch = self._profiles(rng, count)
        norms = batch.fading_norms()
        target = self.radius * 10.0 ** rng.uniform(
            -self.radius_decades, 0.0, count)
        factor = np.where(norms > 0, target / np.where(norms > 0, norms, 1.0),
                          0.0)
        return SegmentBatch(batch.values * factor[:, None, None], self.q,
                            self.dtheta, batch.tails * factor)

    def draw(self, count: int, seed: int):
        rng = np.random.default_rng(seed)
        t = rng.uniform(0.0, self.t_horizon, count)
        return t, self._rescaled(rng, count)


@dataclass(frozen=True)
class PairSampler:
    """(t, z, y) triples mixing independent pairs with contracting pairs
    y = z + eps * eta, eps log-uniform down to 1e-7, so moduli that blow up
    for nearby arguments are exercised."""

    base: SegmentSampler
    near_fraction: float = 0.5
    eps_decades: float = 7.0

    def draw(self, count: int, seed: int):
        rng = np.random.default_rng(seed)
        t = rng.uniform(0.0, self.base.t_horizon, count)
        z = self.base._rescaled(rng, count)
        indep = self.base._rescaled(rng, count)
        eta = self.base._rescaled(rng, count)
        eps = 10.0 ** rng.uniform(-self.eps_decades, 0.0, count)
        near_vals = z.values + eps[:, None, None] * eta.values
        near_tails = z.tails + eps * eta.tails
        near = rng.uniform(size=count) < self.near_fraction
        y_vals = np.where(near[:, None, None], near_vals, indep.values)
        y_tails = np.where(near, near_tails, indep.tails)
        return t, z, SegmentBatch(y_vals, self.base.q, self.base.dtheta,
                                  y_tails)


# ---------------------------------------------------------------------------
# Condition checkers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionReport:
    condition: str
    n_samples: int
    worst_ratio: float
    witness: dict
    declared_constant: float
    passed: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "passed",
                           bool(self.worst_ratio <= 1.0 + PASS_SLACK))

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "n_samples": self.n_samples,
            "worst_ratio": self.worst_ratio,
            "declared_constant": self.declared_constant,
            "passed": self.passed,
            "witness": self.witness,
        }


def _pairings(coeff, t_col, seg) -> np.ndarray:
    """max(2<head, f>, 2<head, g>, |h|^2) per sample."""
    head = seg.head
    f = np.asarray(coeff.f(t_col, seg), dtype=float)
    g = np.asarray(coeff.g(t_col, seg), dtype=float)
    h = np.asarray(coeff.h(t_col, seg), dtype=float)
    dot_f = 2.0 * np.sum(head * f, axis=1)
    dot_g = 2.0 * np.sum(head * g, axis=1)
    h_sq = np.sum(h * h, axis=1)
    return np.maximum(np.maximum(dot_f, dot_g), h_sq)


def _difference_pairings(coeff, t_col, z: SegmentBatch, y: SegmentBatch
                         ) -> np.ndarray:
    """max(2<dz0, df>, 2<dz0, dg>, |dh|^2) per sample pair."""
    d0 = z.head - y.head
    fz = np.asarray(coeff.f(t_col, z), dtype=float)
    fy = np.asarray(coeff.f(t_col, y), dtype=float)
    gz = np.asarray(coeff.g(t_col, z), dtype=float)
    gy = np.asarray(coeff.g(t_col, y), dtype=float)
    hz = np.asarray(coeff.h(t_col, z), dtype=float)
    hy = np.asarray(coeff.h(t_col, y), dtype=float)
    dot_f = 2.0 * np.sum(d0 * (fz - fy), axis=1)
    dot_g = 2.0 * np.sum(d0 * (gz - gy), axis=1)
    h_sq = np.sum((hz - hy) ** 2, axis=1)
    return np.maximum(np.maximum(dot_f, dot_g), h_sq)


def _ratio(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """lhs/rhs with the convention 0 for nonpositive lhs and +inf for a
    positive lhs against a vanishing rhs."""
    out = np.zeros_like(lhs)
    pos = lhs > 0
    with np.errstate(divide="ignore"):
        out[pos] = np.where(rhs[pos] > 0, lhs[pos] / rhs[pos], np.inf)
    return out


_CHUNK = 2048


def check_H1(coeff: CoefficientTriple, sampler: SegmentSampler, K: float,
             n_samples: int = 10_000, seed: int = 0) -> ConditionReport:
    """Growth condition: the worst ratio of the channel pairings against
    K (1 + |segment norm|^2) over sampled (t, segment) draws."""
    if K < 0:
        raise CoefficientError("K must be nonnegative")
    worst, witness = -np.inf, {}
    done = 0
    while done < n_samples:
        take = min(_CHUNK, n_samples - done)
        t, seg = sampler.draw(take, seed + done)
        lhs = _pairings(coeff, t[:, None], seg)
        norms = seg.grid_norms()
        rhs = K * (1.0 + norms ** 2)
        ratios = _ratio(lhs, rhs)
        b = int(np.argmax(ratios))
        if ratios[b] > worst:
            worst = float(ratios[b])
            witness = {
                "t": float(t[b]),
                "head": seg.head[b].tolist(),
                "norm": float(norms[b]),
                "lhs": float(lhs[b]),
                "rhs": float(rhs[b]),
            }
        done += take
    worst = max(worst, 0.0)
    return ConditionReport("H1", n_samples, worst, witness, K)


def check_H2(coeff: CoefficientTriple, pair_sampler: PairSampler, Khat: float,
             n_samples: int = 10_000, seed: int = 0) -> ConditionReport:
    """One-sided difference condition at a declared constant; identical
    pairs are skipped, and an all-identical draw is a sampler error."""
    if Khat < 0:
        raise CoefficientError("Khat must be nonnegative")
    worst, witness = -np.inf, {}
    done = kept = 0
    while done < n_samples:
        take = min(_CHUNK, n_samples - done)
        t, z, y = pair_sampler.draw(take, seed + done)
        diff_norms = (z - y).grid_norms()
        live = diff_norms > 0.0
        if not np.any(live):
            done += take
            continue
        kept += int(np.sum(live))
        lhs = _difference_pairings(coeff, t[:, None], z, y)
        rhs = Khat * diff_norms ** 2
        ratios = np.where(live, _ratio(lhs, rhs), -np.inf)
        b = int(np.argmax(ratios))
        if ratios[b] > worst:
            worst = float(ratios[b])
            witness = {
                "t": float(t[b]),
                "z_head": z.head[b].tolist(),
                "y_head": y.head[b].tolist(),
                "diff_norm": float(diff_norms[b]),
                "lhs": float(lhs[b]),
                "rhs": float(rhs[b]),
            }
        done += take
    if kept == 0:
        raise CoefficientError("degenerate sampler: all pairs identical")
    worst = max(worst, 0.0)
    return ConditionReport("H2", n_samples, worst, witness, Khat)


def check_A1_A2(coeff: CoefficientTriple, pair_sampler: PairSampler,
                n_samples: int = 10_000, seed: int = 0,
                t_grid: np.ndarray | None = None
                ) -> tuple[ConditionReport, ConditionReport]:
    """Weak monotonicity: the difference pairings against kappa of the
    squared difference norm, plus the zero-history bound for (f, g, h)."""
    if coeff.kappa is None:
        raise CoefficientError(
            f"entry {coeff.label!r} declares no kappa function")
    kappa = coeff.kappa
    worst, witness = -np.inf, {}
    done = kept = 0
    while done < n_samples:
        take = min(_CHUNK, n_samples - done)
        t, z, y = pair_sampler.draw(take, seed + done)
        diff_norms = (z - y).grid_norms()
        live = diff_norms > 0.0
        if not np.any(live):
            done += take
            continue
        kept += int(np.sum(live))
        lhs = _difference_pairings(coeff, t[:, None], z, y)
        rhs = kappa(diff_norms ** 2)
        ratios = np.where(live, _ratio(lhs, rhs), -np.inf)
        b = int(np.argmax(ratios))
        if ratios[b] > worst:
            worst = float(ratios[b])
            witness = {
                "t": float(t[b]),
                "z_head": z.head[b].tolist(),
                "y_head": y.head[b].tolist(),
                "diff_norm": float(diff_norms[b]),
                "lhs": float(lhs[b]),
                "rhs": float(rhs[b]),
            }
        done += take
    if kept == 0:
        raise CoefficientError("degenerate sampler: all pairs identical")
    a1 = ConditionReport("A1", n_samples, max(worst, 0.0), witness, kappa.b)

    if t_grid is None:
        t_grid = np.linspace(0.0, pair_sampler.base.t_horizon, 101)
    zero = zero_segment(pair_sampler.base.q, pair_sampler.base.tau,
                        pair_sampler.base.dtheta, coeff.state_dim)
    ktilde = coeff.declared_Ktilde if coeff.declared_Ktilde is not None else 0.0
    worst_val, worst_t = 0.0, float(t_grid[0])
    for t in t_grid:
        fv, gv, hv = evaluate(coeff, float(t), zero)
        val = max(float(fv @ fv), float(gv @ gv), float(hv @ hv))
        if val > worst_val:
            worst_val, worst_t = val, float(t)
    ratio = 0.0 if worst_val <= 0.0 else (
        worst_val / ktilde if ktilde > 0.0 else np.inf)
    a2 = ConditionReport("A2", len(t_grid), float(ratio),
                         {"t": worst_t, "value": worst_val}, ktilde)
    return a1, a2


# ---------------------------------------------------------------------------
# Problem catalog
# ---------------------------------------------------------------------------

def catalog_ids() -> list[str]:
    return [
        "linear",
        "fading-average",
        "cubic-dissipative",
        "no-memory-linear",
        "decay-deterministic",
        "sqrt-counterexample",
        "cubic-growth-counterexample",
    ]


def build_problem(problem_id: str, q: float, tau_trunc: float,
                  dt: float) -> CoefficientTriple:
    """Instantiate a catalog entry for a concrete phase-space setup.

    Declared constants depend on q and on the actual evaluation grid: the
    unit point delay is compared at e^{q tau} with tau snapped to the grid,
    and the fading-average bound scales with the truncation window.
    """
    if problem_id == "linear":
        tau_d = 1.0
        tau_snap = max(round(tau_d / dt) * dt, tau_d) + 0.5 * dt
        k_const = max(0.5 * math.exp(q * tau_snap), 1.0)
        return CoefficientTriple(
            label="linear",
            f=lambda t, s: -s.head + 0.25 * s.delayed(tau_d),
            g=lambda t, s: -0.25 * s.head,
            h=lambda t, s: 1.0 * s.head,
            delays=(tau_d,),
            declared_K=k_const,
            declared_Khat=k_const,
            kappa=KappaFunction("linear", k_const),
            declared_Ktilde=0.0,
        )
    if problem_id == "fading-average":
        b_avg = 0.25
        k_const = max(2.0 * b_avg * q * 1.02 * tau_trunc, 0.25)
        return CoefficientTriple(
            label="fading-average",
            f=lambda t, s: -s.head + b_avg * s.fading_average(),
            h=lambda t, s: 0.5 * s.head,
            uses_fading=True,
            declared_K=k_const,
            declared_Khat=k_const,
            kappa=KappaFunction("linear", k_const),
            declared_Ktilde=0.0,
        )
    if problem_id == "cubic-dissipative":
        def cubic_f(t, s):
            head = s.head
            return head - np.sum(head * head, axis=-1, keepdims=True) * head
        return CoefficientTriple(
            label="cubic-dissipative",
            f=cubic_f,
            h=lambda t, s: 0.5 * s.head,
            declared_K=2.0,
            declared_Khat=2.0,
            kappa=KappaFunction("log-modulus", 2.0),
            declared_Ktilde=0.0,
        )
    if problem_id == "no-memory-linear":
        return CoefficientTriple(
            label="no-memory-linear",
            f=lambda t, s: -s.head,
            h=lambda t, s: 0.1 * s.head,
            declared_K=0.01,
            declared_Khat=0.01,
            kappa=KappaFunction("linear", 0.01),
            declared_Ktilde=0.0,
        )
    if problem_id == "decay-deterministic":
        return CoefficientTriple(
            label="decay-deterministic",
            f=lambda t, s: -s.head,
            declared_K=1.0,
            declared_Khat=2.0,
            kappa=KappaFunction("linear", 2.0),
            declared_Ktilde=0.0,
        )
    if problem_id == "sqrt-counterexample":
        def sqrt_f(t, s):
            head = s.head
            return np.sign(head) * np.sqrt(np.abs(head))
        return CoefficientTriple(
            label="sqrt-counterexample",
            f=sqrt_f,
            h=lambda t, s: np.ones_like(s.head),
            declared_K=2.0,
            declared_Khat=4.0,
            expected_failures=frozenset({"H2"}),
            default_initial="const:0.0",
        )
    if problem_id == "cubic-growth-counterexample":
        def growth_f(t, s):
            head = s.head
            return np.sum(head * head, axis=-1, keepdims=True) * head
        return CoefficientTriple(
            label="cubic-growth-counterexample",
            f=growth_f,
            declared_K=2.0,
            expected_failures=frozenset({"H1"}),
        )
    raise CoefficientError(f"unknown problem id {problem_id!r}")
