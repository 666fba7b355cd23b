"""G-Brownian motion ensembles and the sup-over-scenarios estimator.

Volatility ambiguity is modeled by a finite family of piecewise-constant
volatility scenarios inside a band [sigma_lo, sigma_hi].  The sublinear
expectation of a path functional is estimated as the maximum over
scenarios of the per-scenario Monte Carlo mean; that estimator is a
guaranteed lower bound on the full sup over the scenario class, so every
upper-bound check run against it remains valid.

Quadratic variation is tracked analytically as the running sum of
sigma(t)^2 dt rather than from squared increments, which removes
discretization noise from that channel entirely.

Randomness is counter-based: each (scenario, path) pair owns a Philox
stream derived from the master seed and a hash of the scenario id, so
ensembles are bit-identical regardless of evaluation order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GbmError",
    "VolatilityBand",
    "VolatilityScenario",
    "ScenarioFamily",
    "ScenarioBundle",
    "ScenarioBlock",
    "SublinearEstimate",
    "generate_scenarios",
    "simulate_paths",
    "simulate_bundle",
    "sublinear_expectation",
    "capacity_estimate",
]


class GbmError(ValueError):
    pass


@dataclass(frozen=True)
class VolatilityBand:
    """Volatility ambiguity interval; sigma_hi^2 bounds QV increments."""

    sigma_lo: float
    sigma_hi: float

    def __post_init__(self):
        if not (0.0 <= self.sigma_lo <= self.sigma_hi) or self.sigma_hi <= 0.0:
            raise GbmError(
                f"need 0 <= sigma_lo <= sigma_hi and sigma_hi > 0, "
                f"got [{self.sigma_lo}, {self.sigma_hi}]")


@dataclass(frozen=True)
class VolatilityScenario:
    """One admissible volatility control, piecewise constant in time.

    kinds:
      constant          params = (sigma,)
      bang-bang         params = (switch_times, levels) with levels in
                        {sigma_lo, sigma_hi}, one more level than switches
      piecewise-random  params = (switch_times, levels) with levels drawn
                        inside the band at generation time
    """

    kind: str
    params: tuple
    id: str

    def sigma_on_grid(self, step_times: np.ndarray) -> np.ndarray:
        """sigma evaluated at step left endpoints."""
        if self.kind == "constant":
            return np.full(len(step_times), self.params[0])
        switches, levels = self.params
        idx = np.searchsorted(np.asarray(switches), step_times, side="right")
        return np.asarray(levels, dtype=float)[idx]


@dataclass(frozen=True)
class ScenarioFamily:
    """Generation recipe for the non-extreme scenarios."""

    kind: str = "bang-bang"           # bang-bang | piecewise-random | mixed
    horizon: float = 1.0
    max_switches: int = 4

    def __post_init__(self):
        if self.kind not in ("bang-bang", "piecewise-random", "mixed"):
            raise GbmError(f"unknown scenario family {self.kind!r}")
        if self.horizon <= 0.0 or self.max_switches < 1:
            raise GbmError("scenario family needs horizon > 0, max_switches >= 1")


def _stable_hash64(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def generate_scenarios(band: VolatilityBand, family: ScenarioFamily,
                       count: int, seed: int) -> list[VolatilityScenario]:
    """Scenario list always led by the two constant extremes.

    The extremes dominate quadratic functionals, so they are mandatory;
    the remaining count - 2 scenarios are drawn from the family spec,
    deterministically in the seed.
    """
    if count < 2:
        raise GbmError("count must be >= 2: extreme scenarios are mandatory")
    scenarios = [
        VolatilityScenario("constant", (band.sigma_lo,), "const-lo"),
        VolatilityScenario("constant", (band.sigma_hi,), "const-hi"),
    ]
    rng = np.random.Generator(np.random.Philox(key=seed))
    for j in range(count - 2):
        kind = family.kind
        if kind == "mixed":
            kind = "bang-bang" if j % 2 == 0 else "piecewise-random"
        n_switch = int(rng.integers(1, family.max_switches + 1))
        switches = tuple(np.sort(rng.uniform(0.0, family.horizon, n_switch)))
        if kind == "bang-bang":
            start_hi = bool(rng.integers(0, 2))
            levels = tuple(
                band.sigma_hi if (i % 2 == 0) == start_hi else band.sigma_lo
                for i in range(n_switch + 1))
            scenarios.append(VolatilityScenario(
                "bang-bang", (switches, levels), f"bangbang-{j}"))
        else:
            levels = tuple(rng.uniform(band.sigma_lo, band.sigma_hi,
                                       n_switch + 1))
            scenarios.append(VolatilityScenario(
                "piecewise-random", (switches, levels), f"pwrandom-{j}"))
    return scenarios


# ---------------------------------------------------------------------------
# Path simulation
# ---------------------------------------------------------------------------

def _check_uniform(grid: np.ndarray) -> float:
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 2:
        raise GbmError("grid needs at least two points")
    steps = np.diff(grid)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise GbmError("non-uniform grid")
    return float(steps[0])


def _path_stream(seed: int, scenario_id: str, path_index: int):
    # independent 2^128-long counter blocks per (seed, scenario, path)
    counter = [0, 0, path_index, _stable_hash64(scenario_id)]
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


def simulate_paths(scenario: VolatilityScenario, grid: np.ndarray,
                   n_paths: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Simulate (B, qv) for one scenario.

    Returns B of shape (n_paths, N+1) with independent Gaussian increments
    of standard deviation sigma(t_i) sqrt(dt), and the analytic quadratic
    variation qv of shape (N+1,), shared by all paths of the scenario.
    """
    if n_paths < 1:
        raise GbmError("n_paths must be >= 1")
    grid = np.asarray(grid, dtype=float)
    dt = _check_uniform(grid)
    sigma = scenario.sigma_on_grid(grid[:-1])
    n_steps = len(grid) - 1

    b = np.empty((n_paths, n_steps + 1))
    b[:, 0] = 0.0
    scale = sigma * np.sqrt(dt)
    for p in range(n_paths):
        xi = _path_stream(seed, scenario.id, p).standard_normal(n_steps)
        np.cumsum(scale * xi, out=b[p, 1:])
    qv = np.concatenate(([0.0], np.cumsum(sigma ** 2 * dt)))
    return b, qv


@dataclass(frozen=True)
class ScenarioBlock:
    """All simulated paths of one scenario on the common grid."""

    scenario: VolatilityScenario
    grid: np.ndarray
    b: np.ndarray          # (n_paths, N+1)
    qv: np.ndarray         # (N+1,)

    @property
    def n_paths(self) -> int:
        return self.b.shape[0]

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def sigma_steps(self) -> np.ndarray:
        return self.scenario.sigma_on_grid(self.grid[:-1])

    def db(self) -> np.ndarray:
        return np.diff(self.b, axis=1)

    def dqv(self) -> np.ndarray:
        return np.diff(self.qv)


@dataclass(frozen=True)
class ScenarioBundle:
    """Ensemble of G-Brownian sample paths grouped by volatility scenario."""

    band: VolatilityBand
    grid: np.ndarray
    blocks: tuple[ScenarioBlock, ...]
    seed: int

    @property
    def scenario_ids(self) -> list[str]:
        return [blk.scenario.id for blk in self.blocks]

    @property
    def n_paths(self) -> int:
        return self.blocks[0].n_paths

    def block(self, scenario_id: str) -> ScenarioBlock:
        for blk in self.blocks:
            if blk.scenario.id == scenario_id:
                return blk
        raise GbmError(f"no scenario {scenario_id!r} in bundle")

    def to_rows(self):
        """Columnar export: (scenario_id, path_id, t, B, QV) rows."""
        for blk in self.blocks:
            for p in range(blk.n_paths):
                for i, t in enumerate(blk.grid):
                    yield (blk.scenario.id, p, float(t),
                           float(blk.b[p, i]), float(blk.qv[i]))


def simulate_bundle(band: VolatilityBand, grid: np.ndarray, n_scenarios: int,
                    n_paths: int, seed: int,
                    family: ScenarioFamily | None = None) -> ScenarioBundle:
    """Generate scenarios and simulate all paths in one call."""
    grid = np.asarray(grid, dtype=float)
    if family is None:
        family = ScenarioFamily(horizon=float(grid[-1]))
    scenarios = generate_scenarios(band, family, n_scenarios, seed)
    blocks = []
    for sc in scenarios:
        b, qv = simulate_paths(sc, grid, n_paths, seed)
        blocks.append(ScenarioBlock(sc, grid, b, qv))
    return ScenarioBundle(band, grid, tuple(blocks), seed)


# ---------------------------------------------------------------------------
# Sublinear expectation and capacity estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SublinearEstimate:
    """Max-over-scenarios estimate with the full per-scenario table."""

    value: float
    table: tuple          # rows (scenario_id, mean, std_err, n_paths)
    dominating: str = field(default="")

    def std_err_of(self, scenario_id: str) -> float:
        for row in self.table:
            if row[0] == scenario_id:
                return row[2]
        raise KeyError(scenario_id)

    @property
    def dominating_std_err(self) -> float:
        return self.std_err_of(self.dominating)


def _eval_functional(functional, blk: ScenarioBlock) -> np.ndarray:
    vals = np.asarray(functional(blk), dtype=float)
    if vals.shape != (blk.n_paths,):
        raise GbmError(
            f"functional must return one value per path, got shape {vals.shape}")
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise GbmError(
            f"non-finite functional value: scenario {blk.scenario.id!r}, "
            f"path {bad}")
    return vals


def sublinear_expectation(functional, bundle: ScenarioBundle) -> SublinearEstimate:
    """Estimate of the sublinear expectation of a path functional.

    ``functional`` receives a ScenarioBlock and returns a length-n_paths
    array.  The estimate is the maximum over scenarios of the per-scenario
    sample mean; sub-additivity, positive homogeneity and monotonicity hold
    for the estimator itself, not merely asymptotically.
    """
    rows = []
    best_val, best_id = -np.inf, ""
    for blk in bundle.blocks:
        vals = _eval_functional(functional, blk)
        mean = float(np.mean(vals))
        sem = float(np.std(vals, ddof=1) / np.sqrt(blk.n_paths)) \
            if blk.n_paths > 1 else 0.0
        rows.append((blk.scenario.id, mean, sem, blk.n_paths))
        if mean > best_val:
            best_val, best_id = mean, blk.scenario.id
    return SublinearEstimate(best_val, tuple(rows), best_id)


def capacity_estimate(event, bundle: ScenarioBundle) -> SublinearEstimate:
    """Capacity of a path event: max over scenarios of empirical frequency."""
    def indicator(blk):
        flags = np.asarray(event(blk))
        if flags.shape != (blk.n_paths,):
            raise GbmError("event must return one bool per path")
        return flags.astype(float)
    return sublinear_expectation(indicator, bundle)
