import numpy as np
import pytest
from scipy import stats

from gsfde.gbm import (
    GbmError,
    ScenarioFamily,
    VolatilityBand,
    VolatilityScenario,
    capacity_estimate,
    generate_scenarios,
    simulate_bundle,
    simulate_paths,
    sublinear_expectation,
)

BAND = VolatilityBand(0.5, 1.0)


def default_bundle(n_scenarios=8, n_paths=256, grid_n=64, horizon=1.0, seed=42):
    grid = np.linspace(0.0, horizon, grid_n + 1)
    return simulate_bundle(BAND, grid, n_scenarios, n_paths, seed)


class TestBandAndScenarios:
    def test_band_validation(self):
        with pytest.raises(GbmError):
            VolatilityBand(1.0, 0.5)
        with pytest.raises(GbmError):
            VolatilityBand(0.0, 0.0)
        VolatilityBand(0.0, 1.0)  # degenerate lower edge is legal

    def test_count_two_gives_exactly_the_extremes(self):
        fam = ScenarioFamily(horizon=1.0)
        scen = generate_scenarios(BAND, fam, 2, seed=1)
        assert [s.kind for s in scen] == ["constant", "constant"]
        assert scen[0].params == (0.5,)
        assert scen[1].params == (1.0,)

    def test_count_below_two_rejected(self):
        with pytest.raises(GbmError, match="extreme"):
            generate_scenarios(BAND, ScenarioFamily(), 1, seed=1)

    def test_degenerate_band_all_identical(self):
        band = VolatilityBand(1.0, 1.0)
        scen = generate_scenarios(band, ScenarioFamily(kind="bang-bang"), 6, 3)
        grid = np.linspace(0.0, 1.0, 33)
        for s in scen:
            assert np.all(s.sigma_on_grid(grid[:-1]) == 1.0)

    def test_bang_bang_family_reproducible(self):
        fam = ScenarioFamily(kind="bang-bang", horizon=1.0)
        a = generate_scenarios(BAND, fam, 8, seed=99)
        b = generate_scenarios(BAND, fam, 8, seed=99)
        assert len(a) == 8
        assert sum(s.kind == "bang-bang" for s in a) == 6
        for sa, sb in zip(a, b):
            assert sa == sb  # bit-exact parameters
        grid = np.linspace(0.0, 1.0, 65)
        for s in a[2:]:
            levels = np.unique(s.sigma_on_grid(grid[:-1]))
            assert set(levels) <= {0.5, 1.0}

    def test_sigma_stays_in_band(self):
        fam = ScenarioFamily(kind="mixed", horizon=2.0)
        grid = np.linspace(0.0, 2.0, 129)
        for s in generate_scenarios(BAND, fam, 10, seed=5):
            sig = s.sigma_on_grid(grid[:-1])
            assert np.all((sig >= 0.5) & (sig <= 1.0))


class TestSimulatePaths:
    def test_single_step_standard_normal(self):
        sc = VolatilityScenario("constant", (1.0,), "const-hi")
        grid = np.array([0.0, 1.0])
        b, qv = simulate_paths(sc, grid, n_paths=10_000, seed=7)
        assert np.all(b[:, 0] == 0.0)
        assert abs(np.mean(b[:, 1])) < 4.0 / np.sqrt(10_000)
        assert np.std(b[:, 1]) == pytest.approx(1.0, rel=0.05)
        assert qv[-1] == 1.0

    def test_constant_scenario_qv_exact(self):
        sc = VolatilityScenario("constant", (0.5,), "const-lo")
        grid = np.linspace(0.0, 1.0, 17)
        _, qv = simulate_paths(sc, grid, n_paths=3, seed=7)
        assert qv[-1] == pytest.approx(0.25, abs=1e-15)
        assert qv[0] == 0.0
        assert np.all(np.diff(qv) > 0)

    def test_bang_bang_qv_exact(self):
        # sigma 1.0 on [0, 0.5), 0.5 on [0.5, 1]: QV(1) = 0.5 + 0.125 = 0.625
        sc = VolatilityScenario("bang-bang", ((0.5,), (1.0, 0.5)), "bb")
        grid = np.linspace(0.0, 1.0, 65)
        _, qv = simulate_paths(sc, grid, n_paths=1, seed=7)
        assert qv[-1] == pytest.approx(0.625, abs=1e-12)

    def test_non_uniform_grid_rejected(self):
        sc = VolatilityScenario("constant", (1.0,), "c")
        with pytest.raises(GbmError, match="non-uniform"):
            simulate_paths(sc, np.array([0.0, 0.1, 0.3]), 1, 1)

    def test_qv_increments_within_band(self):
        bundle = default_bundle()
        dt = bundle.grid[1] - bundle.grid[0]
        for blk in bundle.blocks:
            dqv = blk.dqv()
            assert np.all(dqv >= 0.25 * dt - 1e-15)
            assert np.all(dqv <= 1.00 * dt + 1e-15)
            assert np.all(np.diff(blk.qv) >= 0.0)

    def test_bit_identical_reruns(self):
        a = default_bundle(seed=123)
        b = default_bundle(seed=123)
        for blk_a, blk_b in zip(a.blocks, b.blocks):
            assert np.array_equal(blk_a.b, blk_b.b)
            assert np.array_equal(blk_a.qv, blk_b.qv)

    def test_path_streams_independent_of_path_count(self):
        sc = VolatilityScenario("constant", (1.0,), "const-hi")
        grid = np.linspace(0.0, 1.0, 33)
        b_small, _ = simulate_paths(sc, grid, n_paths=8, seed=11)
        b_large, _ = simulate_paths(sc, grid, n_paths=32, seed=11)
        assert np.array_equal(b_small, b_large[:8])


class TestSublinearExpectation:
    def test_constant_functional_exact(self):
        bundle = default_bundle(n_paths=32, grid_n=8)
        est = sublinear_expectation(lambda blk: np.full(blk.n_paths, 5.0), bundle)
        assert est.value == 5.0

    def test_b1_squared_dominated_by_sigma_hi(self):
        bundle = default_bundle(n_paths=2048, grid_n=32)
        est = sublinear_expectation(lambda blk: blk.b[:, -1] ** 2, bundle)
        assert est.dominating == "const-hi"
        assert abs(est.value - 1.0) <= 3.0 * est.dominating_std_err

    def test_negated_square_dominated_by_sigma_lo(self):
        bundle = default_bundle(n_paths=2048, grid_n=32)
        est = sublinear_expectation(lambda blk: -blk.b[:, -1] ** 2, bundle)
        assert est.dominating == "const-lo"
        assert abs(est.value - (-0.25)) <= 3.0 * est.dominating_std_err

    def test_nan_functional_rejected_with_path_id(self):
        bundle = default_bundle(n_paths=4, grid_n=4)

        def bad(blk):
            out = np.ones(blk.n_paths)
            out[2] = np.nan
            return out

        with pytest.raises(GbmError, match="non-finite.*path 2"):
            sublinear_expectation(bad, bundle)

    def test_estimator_sublinearity_exact(self):
        # dyadic-valued functionals with 2^8 paths: all means are exact floats
        bundle = default_bundle(n_paths=256, grid_n=16)
        rng = np.random.default_rng(0)
        for _ in range(25):
            i, j = rng.integers(1, 17, size=2)

            def fx(blk, i=i):
                return np.round(blk.b[:, i] * 64.0) / 64.0

            def fy(blk, j=j):
                return np.round(np.abs(blk.b[:, j]) * 64.0) / 64.0

            ex = sublinear_expectation(fx, bundle).value
            ey = sublinear_expectation(fy, bundle).value
            exy = sublinear_expectation(
                lambda blk: fx(blk) + fy(blk), bundle).value
            assert exy <= ex + ey  # exact, no tolerance

            c = float(rng.integers(0, 8)) / 4.0  # dyadic scale
            ecx = sublinear_expectation(lambda blk: c * fx(blk), bundle).value
            assert ecx == c * ex

            # monotonicity: fx <= fx + |fy| pathwise
            eplus = sublinear_expectation(
                lambda blk: fx(blk) + np.abs(fy(blk)), bundle).value
            assert ex <= eplus

    def test_martingale_property_of_ito_integral(self):
        # adapted integrand: estimate of int eta dB within 3 SE of 0
        # for each constant scenario
        bundle = default_bundle(n_paths=4096, grid_n=32, seed=21)

        def ito(blk):
            eta = np.sign(blk.b[:, :-1])      # adapted, left endpoint
            return np.sum(eta * blk.db(), axis=1)

        est = sublinear_expectation(ito, bundle)
        for row in est.table:
            sid, mean, sem, _ = row
            if sid.startswith("const"):
                assert abs(mean) <= 3.0 * sem

    def test_ito_isometry_upper_bound(self):
        # estimate of (int eta dB)^2 <= sigma_hi^2 * estimate of int eta^2 dv
        bundle = default_bundle(n_paths=4096, grid_n=32, seed=22)
        dt = bundle.grid[1] - bundle.grid[0]

        def sq_integral(blk):
            eta = 1.0 + 0.5 * np.cos(blk.b[:, :-1])
            return np.sum(eta * blk.db(), axis=1) ** 2

        def eta_sq_dv(blk):
            eta = 1.0 + 0.5 * np.cos(blk.b[:, :-1])
            return np.sum(eta ** 2 * dt, axis=1)

        lhs = sublinear_expectation(sq_integral, bundle)
        rhs = sublinear_expectation(eta_sq_dv, bundle)
        combined = 3.0 * (lhs.dominating_std_err + rhs.dominating_std_err)
        assert lhs.value <= 1.0 * rhs.value + combined


class TestCapacity:
    def test_certain_and_impossible(self):
        bundle = default_bundle(n_paths=16, grid_n=8)
        ones = capacity_estimate(
            lambda blk: np.ones(blk.n_paths, dtype=bool), bundle)
        zeros = capacity_estimate(
            lambda blk: np.zeros(blk.n_paths, dtype=bool), bundle)
        assert ones.value == 1.0
        assert zeros.value == 0.0

    def test_gaussian_tail(self):
        bundle = default_bundle(n_paths=4096, grid_n=32, seed=33)
        est = capacity_estimate(lambda blk: blk.b[:, -1] > 2.0, bundle)
        target = stats.norm.sf(2.0)     # dominating scenario sigma = 1
        assert target == pytest.approx(0.02275, abs=2e-5)
        se = np.sqrt(target * (1 - target) / 4096)
        assert abs(est.value - target) <= 3.0 * se

    def test_g_markov_inequality(self):
        # pointwise 1{|X|>a} <= X^2/a^2 makes this exact per scenario
        bundle = default_bundle(n_paths=512, grid_n=32, seed=44)
        alpha = 1.5

        def sup_norm(blk):
            return np.max(np.abs(blk.b), axis=1)

        cap = capacity_estimate(
            lambda blk: sup_norm(blk) > alpha, bundle)
        second = sublinear_expectation(
            lambda blk: sup_norm(blk) ** 2, bundle)
        assert cap.value <= second.value / alpha ** 2 + 1e-12
