import math

import numpy as np
import pytest

from varinfer import (
    Dataset,
    HypothesisSpec,
    ModelParams,
    NetworkSpec,
    SimConfig,
    fdr_select,
    gen_data,
    gen_structure,
    global_test,
    norm_cdf,
    norm_ppf,
    residuals,
    sigma_hat,
)
from varinfer import test_matrix as build_test_matrix
from varinfer.inference import erfc


class TestNormalCdf:
    def test_against_libm_erfc(self):
        # math.erfc is an independent high-accuracy oracle.
        grid = np.concatenate([
            np.linspace(-38.0, 38.0, 4001),
            np.linspace(-1.0, 1.0, 2001),
        ])
        ours = norm_cdf(grid)
        ref = np.array([0.5 * math.erfc(-t / math.sqrt(2.0)) for t in grid])
        assert np.max(np.abs(ours - ref)) <= 1e-12

    def test_erfc_special_values(self):
        assert erfc(0.0) == pytest.approx(1.0, abs=1e-15)
        assert erfc(-1.0) + erfc(1.0) == pytest.approx(2.0, abs=1e-14)

    def test_ppf_round_trip(self):
        for q in (1e-10, 0.001, 0.3, 0.5, 0.9, 0.975, 1 - 1e-10):
            assert float(norm_cdf(norm_ppf(q))) == pytest.approx(q, rel=1e-10, abs=1e-13)

    def test_ppf_known_value(self):
        assert norm_ppf(0.975) == pytest.approx(1.959963984540054, abs=1e-9)

    def test_ppf_rejects_bounds(self):
        for q in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValueError):
                norm_ppf(q)


class TestResiduals:
    def test_zero_a_hat(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=(10, 3))
        out = residuals(Dataset(y), np.zeros((3, 3)))
        expected = y[2:] - y[1:].mean(axis=0)
        assert np.allclose(out, expected, atol=1e-12)
        assert out.shape == (8, 3)

    def test_true_model_recovers_centered_innovations(self):
        # sigma_eps = 0 and A_hat = A_*: residuals are eta_t minus their mean.
        net = NetworkSpec("banded", 4, 0.8, seed=1)
        a = gen_structure(net)
        params = ModelParams(a, 1.0, 0.0)
        data = gen_data(params, SimConfig(network=net, T=40, sigma_eta=1.0, sigma_eps=0.0, seed=2))
        etas = data.x[1:] - data.x[:-1] @ a.T
        expected = (etas - etas.mean(axis=0))[1:]
        out = residuals(data, a)
        assert np.allclose(out, expected, atol=1e-10)

    def test_full_set_column_means_vanish(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=(25, 4))
        a_hat = 0.2 * rng.normal(size=(4, 4))
        diffs = y[1:] - y[:-1] @ a_hat.T
        full = diffs - diffs.mean(axis=0)
        assert np.max(np.abs(full.mean(axis=0))) <= 1e-12
        assert np.allclose(residuals(Dataset(y), a_hat), full[1:], atol=1e-14)

    def test_needs_four_rows(self):
        with pytest.raises(ValueError):
            residuals(Dataset(np.zeros((3, 2)) + np.arange(6).reshape(3, 2)), np.zeros((2, 2)))


class TestSigmaHat:
    def test_zero_matrix(self):
        params = ModelParams(np.zeros((3, 3)), 0.3, 0.2)
        assert np.allclose(sigma_hat(params), 0.5 * np.ones((3, 3)), atol=1e-14)

    def test_paper_noise_level_zero_matrix(self):
        params = ModelParams(np.zeros((2, 2)), 0.04, 0.04)
        assert np.allclose(sigma_hat(params), 0.08, atol=1e-15)

    def test_five_term_formula_by_direct_evaluation(self):
        params = ModelParams(np.array([[0.5, 0.0], [0.0, 0.5]]), 0.04, 0.04)
        out = sigma_hat(params)
        # Term-by-term: (0.08)^2 + 0 + 2*0.0016*0.25 + 0.0016*0.0625
        # + (0.0016 + 0.0016)*0.5 = 0.0089.
        assert out[0, 1] == pytest.approx(math.sqrt(0.0089), abs=1e-12)

    def test_random_entries_match_scalar_loop(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(4, 4))
        params = ModelParams(a, 0.3, 0.7)
        out = sigma_hat(params)
        se, sn = 0.7, 0.3
        for i in range(4):
            for j in range(4):
                ri = float(a[i] @ a[i])
                rj = float(a[j] @ a[j])
                var = (
                    (se + sn) ** 2
                    + se**2 * a[i, j] ** 2
                    + 2 * se**2 * a[i, i] * a[j, j]
                    + se**2 * ri * rj
                    + (se**2 + se * sn) * (ri + rj)
                )
                assert out[i, j] == pytest.approx(math.sqrt(var), rel=1e-12)

    def test_floor_applies(self):
        params = ModelParams(np.zeros((2, 2)), 1e-12, 0.0)
        assert np.all(sigma_hat(params) == 1e-6)


class TestTestMatrix:
    def test_constant_series_gives_zero_statistics(self):
        y = np.tile(np.array([1.0, -2.0, 0.5]), (12, 1))
        params = ModelParams(np.zeros((3, 3)), 0.5, 0.5)
        tm = build_test_matrix(Dataset(y), params, np.zeros((3, 3)))
        assert np.allclose(tm.H, 0.0, atol=1e-12)
        assert tm.T_used == 10

    def test_linearity_in_null_matrix(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=(30, 3))
        params = ModelParams(0.2 * rng.normal(size=(3, 3)), 0.6, 0.4)
        a0 = 0.1 * rng.normal(size=(3, 3))
        a0_alt = a0 + 0.05 * rng.normal(size=(3, 3))
        tm0 = build_test_matrix(Dataset(y), params, a0)
        tm1 = build_test_matrix(Dataset(y), params, a0_alt)
        t_used = 28
        expected = -math.sqrt(t_used) * params.sigma_eta_sq * (a0_alt - a0) / tm0.sigma_hat
        assert np.allclose(tm1.H - tm0.H, expected, atol=1e-9)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(11)
        p = 4
        y = rng.normal(size=(20, p))
        params = ModelParams(0.2 * rng.normal(size=(p, p)), 0.5, 0.5)
        a0 = 0.1 * rng.normal(size=(p, p))
        perm = rng.permutation(p)
        pm = np.eye(p)[perm]
        tm = build_test_matrix(Dataset(y), params, a0)
        tm_p = build_test_matrix(
            Dataset(y[:, perm]),
            ModelParams(pm @ params.A @ pm.T, params.sigma_eta_sq, params.sigma_eps_sq),
            pm @ a0 @ pm.T,
        )
        assert np.allclose(tm_p.H, pm @ tm.H @ pm.T, atol=1e-10)

    def test_oracle_null_moments_small_scale(self):
        # Reduced version of the null-normality acceptance run.
        p, T, reps = 6, 400, 150
        pooled = []
        for r in range(reps):
            root = np.random.SeedSequence(entropy=314, spawn_key=(0, r))
            s_seed, d_seed = (int(s) for s in root.generate_state(2, np.uint64))
            net = NetworkSpec("banded", p, 0.9, seed=s_seed)
            a = gen_structure(net)
            params = ModelParams(a, 0.04, 0.04)
            data = gen_data(params, SimConfig(network=net, T=T, sigma_eta=0.2, sigma_eps=0.2, seed=d_seed))
            tm = build_test_matrix(Dataset(data.y), params, a)
            pooled.append([tm.H[0, 3], tm.H[2, 4], tm.H[4, 1]])
        pooled = np.array(pooled)
        assert np.all(np.abs(pooled.mean(axis=0)) <= 0.2)
        assert np.all((pooled.var(axis=0, ddof=1) > 0.7) & (pooled.var(axis=0, ddof=1) < 1.3))


class TestGlobalTest:
    def test_threshold_closed_form(self):
        tm = build_test_matrix(
            Dataset(np.tile(np.arange(30.0), (12, 1))),
            ModelParams(np.zeros((30, 30)), 0.5, 0.5),
            np.zeros((30, 30)),
        )
        res = global_test(tm, HypothesisSpec(np.zeros((30, 30))), 0.05)
        expected = 2 * math.log(900) - math.log(math.log(900)) - math.log(math.pi) \
            - 2 * math.log(-math.log(0.95))
        assert res.threshold == pytest.approx(expected, abs=1e-12)
        assert res.threshold == pytest.approx(16.4836, abs=1e-3)

    def test_p_value_at_centering_point(self):
        # G_S = 2 log|S| - log log|S| means x = 0: p = 1 - exp(-1/sqrt(pi)).
        card = 900
        x = 0.0
        p_val = 1.0 - math.exp(-math.exp(-x / 2.0) / math.sqrt(math.pi))
        assert p_val == pytest.approx(0.4312, abs=1e-4)

    def test_threshold_monotone_in_alpha(self):
        tm = _toy_tm(5)
        spec = HypothesisSpec(np.zeros((5, 5)))
        th = [global_test(tm, spec, a).threshold for a in (0.01, 0.05, 0.1, 0.5)]
        assert all(x > y for x, y in zip(th, th[1:]))

    def test_reject_iff_p_below_alpha(self):
        rng = np.random.default_rng(0)
        spec = HypothesisSpec(np.zeros((7, 7)))
        for _ in range(200):
            tm = _toy_tm(7, scale=float(rng.uniform(0.1, 3.0)), rng=rng)
            alpha = float(rng.uniform(0.005, 0.5))
            res = global_test(tm, spec, alpha)
            assert res.reject == (res.p_value < alpha)

    def test_extreme_level_sanity(self):
        # Close to level one the threshold collapses and the null is
        # rejected essentially always (the level-one endpoint itself is
        # rejected by validation).
        rejections = 0
        n = 50
        for r in range(n):
            root = np.random.SeedSequence(entropy=777, spawn_key=(1, r))
            s_seed, d_seed = (int(s) for s in root.generate_state(2, np.uint64))
            net = NetworkSpec("banded", 10, 0.9, seed=s_seed)
            a = gen_structure(net)
            params = ModelParams(a, 0.04, 0.04)
            data = gen_data(
                params, SimConfig(network=net, T=200, sigma_eta=0.2, sigma_eps=0.2, seed=d_seed)
            )
            tm = build_test_matrix(Dataset(data.y), params, a)
            res = global_test(tm, HypothesisSpec(a), 0.999)
            rejections += int(res.reject)
        assert rejections >= 0.99 * n
        with pytest.raises(ValueError):
            global_test(tm, HypothesisSpec(a), 1.0)

    def test_small_s_rejected(self):
        tm = _toy_tm(3)
        with pytest.raises(ValueError):
            global_test(tm, HypothesisSpec(np.zeros((3, 3)), {(0, 0), (1, 1)}), 0.05)

    def test_statistic_is_max_over_s_only(self):
        tm = _toy_tm(4)
        spec = HypothesisSpec(np.zeros((4, 4)), {(0, 0), (0, 1), (1, 0)})
        res = global_test(tm, spec, 0.05)
        expected = max(tm.H[0, 0] ** 2, tm.H[0, 1] ** 2, tm.H[1, 0] ** 2)
        assert res.G_S == pytest.approx(expected, abs=1e-14)


def _toy_tm(p, scale=1.0, rng=None):
    from varinfer.inference import TestMatrix

    rng = rng or np.random.default_rng(1)
    return TestMatrix(H=scale * rng.normal(size=(p, p)), sigma_hat=np.ones((p, p)), T_used=100)


def _grid_oracle_threshold(abs_h, card, beta, n_grid=1_000_000):
    upper = math.sqrt(2.0 * math.log(card))
    ts = np.linspace(0.0, upper, n_grid + 1)[1:]
    srt = np.sort(abs_h)
    r = len(abs_h) - np.searchsorted(srt, ts, side="right")
    fdp = 2.0 * (1.0 - norm_cdf(ts)) * card / np.maximum(r, 1)
    hits = np.nonzero(fdp <= beta)[0]
    return float(ts[hits[0]]) if hits.size else upper


class TestFdrSelect:
    def test_all_strong_signals_gives_phi_inverse(self):
        from varinfer.inference import TestMatrix

        h = np.full((10, 10), 10.0)
        tm = TestMatrix(H=h, sigma_hat=np.ones((10, 10)), T_used=50)
        res = fdr_select(tm, HypothesisSpec(np.zeros((10, 10))), 0.05)
        assert res.t_hat == pytest.approx(1.9600, abs=1e-3)
        assert len(res.rejections) == 100

    def test_all_zero_statistics_falls_back(self):
        from varinfer.inference import TestMatrix

        tm = TestMatrix(H=np.zeros((10, 10)), sigma_hat=np.ones((10, 10)), T_used=50)
        res = fdr_select(tm, HypothesisSpec(np.zeros((10, 10))), 0.05)
        assert res.t_hat == pytest.approx(math.sqrt(2 * math.log(100)), abs=1e-12)
        assert len(res.rejections) == 0

    def test_matches_brute_force_grid(self):
        from varinfer.inference import TestMatrix

        rng = np.random.default_rng(8)
        card = 50
        pairs = [(i, j) for i in range(50) for j in range(1)]
        upper = math.sqrt(2 * math.log(card))
        for trial in range(20):
            h = np.zeros((50, 50))
            vals = rng.normal(size=card) * float(rng.uniform(0.5, 2.0))
            for (i, j), v in zip(pairs, vals):
                h[i, j] = v
            tm = TestMatrix(H=h, sigma_hat=np.ones((50, 50)), T_used=50)
            spec = HypothesisSpec(np.zeros((50, 50)), set(pairs))
            beta = float(rng.uniform(0.02, 0.4))
            res = fdr_select(tm, spec, beta)
            oracle = _grid_oracle_threshold(np.abs(vals), card, beta)
            assert abs(res.t_hat - oracle) <= upper / 1_000_000 + 1e-12

    def test_monotone_in_beta(self):
        from varinfer.inference import TestMatrix

        rng = np.random.default_rng(2)
        h = rng.normal(size=(8, 8)) * 1.5
        tm = TestMatrix(H=h, sigma_hat=np.ones((8, 8)), T_used=50)
        spec = HypothesisSpec(np.zeros((8, 8)))
        prev_t, prev_rej = None, None
        for beta in (0.01, 0.05, 0.1, 0.3):
            res = fdr_select(tm, spec, beta)
            if prev_t is not None:
                assert res.t_hat <= prev_t + 1e-12
                assert prev_rej <= res.rejections
            prev_t, prev_rej = res.t_hat, res.rejections

    def test_threshold_in_range(self):
        from varinfer.inference import TestMatrix

        rng = np.random.default_rng(33)
        for _ in range(20):
            h = rng.normal(size=(6, 6)) * float(rng.uniform(0.2, 4.0))
            tm = TestMatrix(H=h, sigma_hat=np.ones((6, 6)), T_used=50)
            res = fdr_select(tm, HypothesisSpec(np.zeros((6, 6))), 0.1)
            assert 0.0 < res.t_hat <= math.sqrt(2 * math.log(36)) + 1e-12
            assert res.rejections == frozenset(
                (i, j) for i in range(6) for j in range(6) if abs(h[i, j]) > res.t_hat
            )

    def test_degenerate_level_rejects_everything_detectable(self):
        # As beta approaches one the threshold drops to the smallest
        # candidate, so every strong entry is rejected.
        from varinfer.inference import TestMatrix

        h = np.where(np.eye(6, dtype=bool), 5.0, 0.0)
        tm = TestMatrix(H=h, sigma_hat=np.ones((6, 6)), T_used=50)
        res = fdr_select(tm, HypothesisSpec(np.zeros((6, 6))), 0.999)
        assert res.rejections == frozenset((i, i) for i in range(6))

    def test_bad_beta_rejected(self):
        tm = _toy_tm(5)
        for beta in (0.0, 1.0, 1.5):
            with pytest.raises(ValueError):
                fdr_select(tm, HypothesisSpec(np.zeros((5, 5))), beta)
