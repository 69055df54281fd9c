import math

import numpy as np
import pytest

from nonuniform_cs.errors import DomainError
from nonuniform_cs.exponents import SparsityModel
from nonuniform_cs.experiments import (
    SNR_CAP_DB,
    ReweightedConfig,
    crossover,
    default_jobs,
    reweighted_l1,
    run_noisy_snr,
    run_p1_sweep,
    run_phase_grid,
    run_reweighted,
    snr_db,
)
from nonuniform_cs.rng import stream

MODEL = SparsityModel.two_class(0.5, 0.5, 0.4, 0.05, 2.5)


def binomial_sigma(p, n):
    return math.sqrt(max(p * (1 - p), 0.25 / n) / n)


class TestCrossover:
    def test_linear_interpolation(self):
        assert crossover([10, 20, 30], [1.0, 0.6, 0.2]) == pytest.approx(22.5)

    def test_exact_level(self):
        assert crossover([1, 2, 3], [1.0, 0.5, 0.0]) == pytest.approx(2.0)

    def test_no_crossing(self):
        assert math.isnan(crossover([1, 2], [1.0, 0.9]))


class TestPhaseGrid:
    def test_full_measurement_column(self):
        g = run_phase_grid(MODEL, [1.0, 2.5], [1.0], n=30, trials=5, seed=1)
        np.testing.assert_array_equal(g.probability[:, 0], 1.0)

    def test_zero_trials(self):
        g = run_phase_grid(MODEL, [1.0], [0.5], n=30, trials=0, seed=1)
        assert g.successes.shape == (1, 1) and g.successes.sum() == 0
        assert len(list(g.rows())) == 1

    def test_counts_bounded(self):
        g = run_phase_grid(MODEL, [1.0, 3.0], [0.3, 0.6], n=40, trials=6, seed=2)
        assert np.all(g.successes <= g.trials)
        assert np.all(g.errors == 0)

    def test_reproducible_across_jobs(self):
        a = run_phase_grid(MODEL, [1.0, 2.5], [0.4, 0.6], n=40, trials=4, seed=3, jobs=1)
        b = run_phase_grid(MODEL, [1.0, 2.5], [0.4, 0.6], n=40, trials=4, seed=3, jobs=2)
        np.testing.assert_array_equal(a.successes, b.successes)

    def test_cells_independent_of_axes(self):
        # a cell's draws depend only on its coordinates
        a = run_phase_grid(MODEL, [1.0, 2.5], [0.4, 0.6], n=40, trials=4, seed=3)
        b = run_phase_grid(MODEL, [1.0], [0.4], n=40, trials=4, seed=3)
        assert a.successes[0, 0] == b.successes[0, 0]

    def test_bad_delta(self):
        with pytest.raises(DomainError):
            run_phase_grid(MODEL, [1.0], [1.2], n=10, trials=1, seed=0)


class TestP1Sweep:
    def test_baseline_included_and_envelope(self):
        s = run_p1_sweep(0.05, [2.0, 4.0], n=40, m=20, p1s=[0.1, 0.3, 0.5], trials=10, seed=4)
        assert 1.0 in s.omega
        assert np.all(s.envelope >= s.baseline)
        assert len(s.best_omega) == 3

    def test_sparse_column_succeeds(self):
        s = run_p1_sweep(0.02, [2.0], n=60, m=30, p1s=[0.0], trials=200, seed=5)
        assert s.baseline[0] >= 0.95

    def test_monotone_in_p1(self):
        s = run_p1_sweep(0.05, [2.5], n=60, m=30, p1s=[0.1, 0.3, 0.5], trials=40, seed=6)
        p = s.probability
        for j in range(p.shape[1]):
            for a, b in zip(p[:-1, j], p[1:, j]):
                assert b <= a + 3 * math.hypot(binomial_sigma(a, 40), binomial_sigma(b, 40))


class TestReweighted:
    def test_config_validation(self):
        with pytest.raises(DomainError):
            ReweightedConfig(10, 5, (11,))
        with pytest.raises(DomainError):
            ReweightedConfig(10, 5, (2,), omega=0.5)
        with pytest.raises(DomainError):
            ReweightedConfig(10, 5, (2,), distribution="cauchy")

    def test_easy_regime(self):
        r = run_reweighted(ReweightedConfig(60, 34, (2, 4), trials=10), seed=7)
        np.testing.assert_array_equal(r.plain, 10)
        np.testing.assert_array_equal(r.reweighted, 10)

    def test_unit_omega_is_plain(self):
        r = run_reweighted(ReweightedConfig(60, 34, (8, 12, 16), omega=1.0, trials=10), seed=8)
        np.testing.assert_array_equal(r.plain, r.reweighted)

    def test_step_two_keeps_k_largest(self):
        rng = stream(9)
        A = rng.standard_normal((10, 30))
        x0 = np.zeros(30)
        x0[:3] = [3.0, -2.0, 1.0]
        x1, x2 = reweighted_l1(A, A @ x0, 3, 10.0)
        np.testing.assert_allclose(x2, x0, atol=1e-9)

    def test_jobs_invariant(self):
        cfg = ReweightedConfig(40, 22, (6, 9), distribution="rayleigh", trials=4)
        a = run_reweighted(cfg, seed=10, jobs=1)
        b = run_reweighted(cfg, seed=10, jobs=2)
        np.testing.assert_array_equal(a.plain, b.plain)
        np.testing.assert_array_equal(a.reweighted, b.reweighted)


class TestNoisy:
    def test_snr_db(self):
        assert snr_db(np.ones(4), np.zeros(4)) == SNR_CAP_DB
        assert snr_db(np.ones(4), 0.1 * np.ones(4)) == pytest.approx(20.0)

    def test_noiseless_exact(self):
        easy = SparsityModel.two_class(0.5, 0.5, 0.1, 0.02)
        r = run_noisy_snr(easy, [1.0, 2.0], n=60, m=40, snrs=[math.inf], trials=5, seed=11)
        assert np.all(r.snr_out >= 120)

    def test_average_nondecreasing_in_snr(self):
        r = run_noisy_snr(MODEL, [2.5], n=60, m=40, snrs=[5.0, 20.0, 40.0], trials=12, seed=12)
        avg = r.average[0]
        spread = np.nanstd(r.snr_out[0], axis=1) / math.sqrt(12)
        for j in range(2):
            assert avg[j + 1] >= avg[j] - 3 * math.hypot(spread[j], spread[j + 1])

    def test_rows(self):
        r = run_noisy_snr(MODEL, [1.0], n=30, m=20, snrs=[10.0], trials=2, seed=13)
        assert len(list(r.rows())) == 2
        assert len(list(r.average_rows())) == 1


def test_default_jobs(monkeypatch):
    monkeypatch.setenv("NONUNIFORM_CS_JOBS", "3")
    assert default_jobs() == 3
    monkeypatch.setenv("NONUNIFORM_CS_JOBS", "x")
    assert default_jobs() == 1


class TestAgainstAnalytic:
    # n = 200 runs; each takes tens of seconds
    def test_best_weight_row(self):
        m = SparsityModel.two_class(0.5, 0.5, 0.4, 0.05)
        omegas = [1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0]
        g = run_phase_grid(m, omegas, [0.46], n=200, trials=40, seed=1)
        best = omegas[int(np.argmax(g.probability[:, 0]))]
        # analytic optimum is about 2.53; allow one grid cell either side
        assert 2.0 <= best <= 3.0

    def test_threshold_bridge(self):
        from nonuniform_cs.thresholds import delta_c

        m = SparsityModel.two_class(0.5, 0.5, 0.4, 0.05, 2.5)
        dc = delta_c(m, grid=100).delta_c
        # measurement counts chosen so that m / n is really outside the margin
        lo, hi = math.floor((dc - 0.05) * 200) / 200, math.ceil((dc + 0.05) * 200) / 200
        g = run_phase_grid(m, [2.5], [lo, hi], n=200, trials=500, seed=3)
        assert g.probability[0, 1] >= 0.95
        assert g.probability[0, 0] <= 0.5

    def test_noisy_weight_comparison(self):
        m = SparsityModel.two_class(0.5, 0.5, 0.4, 0.05)
        r = run_noisy_snr(m, [1.0, 3.0], n=200, m=100, snrs=[40.0], trials=20, seed=2)
        assert r.average[1, 0] >= r.average[0, 0]
