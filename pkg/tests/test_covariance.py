from __future__ import annotations

import numpy as np
import pytest
from scipy import special, stats

from ensemble_forge.covariance import (
    CovarianceMatrix,
    CovarianceSequence,
    eigendecompose,
    local_variances,
    rolling_covariance,
    rotate_and_scale,
    total_covariance,
    trace_distribution,
)
from ensemble_forge.marketdata import ReturnPanel, demean
from ensemble_forge.montecarlo import ks_distance


def panel_from(values: np.ndarray, demeaned: bool = True) -> ReturnPanel:
    k, t = values.shape
    return ReturnPanel(
        tickers=tuple(f"T{i}" for i in range(k)),
        timestamps=tuple(f"d{j:06d}" for j in range(t)),
        values=values,
        horizon=1,
        demeaned=demeaned,
    )


class TestTotalCovariance:
    def test_perfectly_correlated_unit_rows(self):
        row = np.tile([1.0, -1.0], 5)  # zero mean, unit mean-square
        cm = total_covariance(panel_from(np.vstack([row, row])))
        assert np.allclose(cm.matrix, [[1.0, 1.0], [1.0, 1.0]], atol=1e-12)

    def test_independent_rows_off_diagonal_vanishes(self):
        rng = np.random.default_rng(11)
        t_tot = 10**5
        values = rng.standard_normal((3, t_tot))
        values -= values.mean(axis=1, keepdims=True)
        cm = total_covariance(panel_from(values))
        off = cm.matrix[~np.eye(3, dtype=bool)]
        # 5 sigma of the 1/sqrt(T_tot) estimator noise
        assert np.all(np.abs(off) < 0.02)

    def test_requires_demeaned_panel(self):
        with pytest.raises(ValueError, match="demeaned"):
            total_covariance(panel_from(np.random.default_rng(0).standard_normal((2, 30)), demeaned=False))

    def test_rank_deficient_rejected(self):
        values = np.random.default_rng(0).standard_normal((5, 5))
        values -= values.mean(axis=1, keepdims=True)
        with pytest.raises(ValueError, match="rank-deficient"):
            total_covariance(panel_from(values))

    def test_matches_naive_double_loop(self):
        rng = np.random.default_rng(2)
        k, t = 7, 50
        values = rng.standard_normal((k, t))
        values -= values.mean(axis=1, keepdims=True)
        cm = total_covariance(panel_from(values))
        naive = np.empty((k, k))
        for i in range(k):
            for j in range(k):
                naive[i, j] = sum(values[i, s] * values[j, s] for s in range(t)) / t
        assert np.allclose(cm.matrix, naive, rtol=1e-12, atol=1e-14)

    def test_sector_block_structure_recovered(self):
        # panels with sector-style block correlations keep that structure in
        # the estimated matrix: within-block entries dominate cross-block ones
        rng = np.random.default_rng(99)
        block = 0.6 * np.ones((5, 5)) + 0.4 * np.eye(5)
        sigma = np.kron(np.eye(4), block)
        sigma[sigma == 0.0] = 0.1
        chol = np.linalg.cholesky(sigma)
        values = chol @ rng.standard_normal((20, 20000))
        values -= values.mean(axis=1, keepdims=True)
        cm = total_covariance(panel_from(values))
        within, cross = [], []
        for i in range(20):
            for j in range(i + 1, 20):
                (within if i // 5 == j // 5 else cross).append(cm.matrix[i, j])
        assert np.mean(within) > 3.0 * np.mean(cross)

    def test_tsv_serialization(self, tmp_path):
        cm = CovarianceMatrix(np.eye(2))
        cm.to_tsv(tmp_path / "cov.tsv", tickers=("x", "y"))
        lines = (tmp_path / "cov.tsv").read_text().splitlines()
        assert lines[0] == "x\ty"
        assert len(lines) == 3


class TestRollingCovariance:
    def test_degenerate_window_equals_total(self):
        rng = np.random.default_rng(3)
        values = rng.standard_normal((3, 40))
        values -= values.mean(axis=1, keepdims=True)
        panel = panel_from(values)
        seq = rolling_covariance(panel, 40, stride=17)
        assert len(seq) == 1
        assert np.allclose(seq.matrices[0].matrix, total_covariance(panel).matrix, atol=1e-12)

    def test_each_window_matches_direct_computation(self):
        rng = np.random.default_rng(4)
        values = rng.standard_normal((2, 30))
        panel = panel_from(values, demeaned=False)
        t_win = 7
        seq = rolling_covariance(panel, t_win, stride=3)
        for cm in seq.matrices:
            lo, hi = cm.window
            chunk = values[:, lo : hi + 1]
            centered = chunk - chunk.mean(axis=1, keepdims=True)
            direct = centered @ centered.T / t_win
            assert np.allclose(cm.matrix, direct, atol=1e-14)

    def test_covariance_switch_is_tracked(self):
        rng = np.random.default_rng(5)
        t_half = 3000
        sigma1 = np.array([[1.0, 0.8], [0.8, 1.0]])
        sigma2 = np.array([[1.0, -0.5], [-0.5, 2.0]])
        chol1, chol2 = np.linalg.cholesky(sigma1), np.linalg.cholesky(sigma2)
        part1 = chol1 @ rng.standard_normal((2, t_half))
        part2 = chol2 @ rng.standard_normal((2, t_half))
        panel = panel_from(np.hstack([part1, part2]), demeaned=False)
        t_win = 250
        seq = rolling_covariance(panel, t_win)
        sampling_tol = 5.0 / np.sqrt(t_win)  # ~5 sigma on correlation-scale entries
        assert np.all(np.abs(seq.matrices[0].matrix - sigma1) < sampling_tol)
        assert np.all(np.abs(seq.matrices[-1].matrix - sigma2) < sampling_tol * np.sqrt(2.0))

    def test_window_validation(self):
        panel = panel_from(np.zeros((2, 10)))
        with pytest.raises(ValueError, match="exceeds panel length"):
            rolling_covariance(panel, 11)
        with pytest.raises(ValueError, match="stride"):
            rolling_covariance(panel, 5, stride=0)


class TestEigendecompose:
    def test_identity(self):
        eb = eigendecompose(CovarianceMatrix(np.eye(4)))
        assert np.allclose(eb.eigenvalues, 1.0, atol=1e-14)
        assert np.allclose(eb.eigenvectors @ eb.eigenvectors.T, np.eye(4), atol=1e-12)

    def test_diagonal(self):
        eb = eigendecompose(CovarianceMatrix(np.diag([4.0, 1.0])))
        assert np.allclose(eb.eigenvalues, [4.0, 1.0])
        # axis-aligned up to sign
        assert np.allclose(np.abs(eb.eigenvectors), np.eye(2), atol=1e-14)

    def test_reconstruction_random_spd(self):
        rng = np.random.default_rng(6)
        base = rng.standard_normal((10, 30))
        sigma = base @ base.T / 30.0
        cm = CovarianceMatrix(sigma)
        eb = eigendecompose(cm)
        rebuilt = eb.eigenvectors @ np.diag(eb.eigenvalues) @ eb.eigenvectors.T
        rel = np.linalg.norm(rebuilt - sigma) / np.linalg.norm(sigma)
        assert rel < 1e-9

    def test_near_singular_rejected(self):
        sigma = np.diag([1.0, 1e-14])
        with pytest.raises(ValueError, match="near-singular"):
            eigendecompose(CovarianceMatrix(sigma))

    def test_trace_equals_eigenvalue_sum(self):
        rng = np.random.default_rng(7)
        base = rng.standard_normal((6, 20))
        cm = CovarianceMatrix(base @ base.T / 20.0)
        eb = eigendecompose(cm)
        assert cm.trace() == pytest.approx(float(eb.eigenvalues.sum()), rel=1e-10)


class TestRotateAndScale:
    def test_norm_preserved_under_identity_sigma(self):
        rng = np.random.default_rng(8)
        values = rng.standard_normal((4, 25))
        eb = eigendecompose(CovarianceMatrix(np.eye(4)))
        out = rotate_and_scale(panel_from(values), eb)
        assert np.allclose(
            np.linalg.norm(out.values, axis=0), np.linalg.norm(values, axis=0), atol=1e-12
        )

    def test_single_step_pythagorean(self):
        eb = eigendecompose(CovarianceMatrix(np.diag([1.0, 1.0])))
        values = np.array([[3.0], [4.0]])
        panel = ReturnPanel(tickers=("a", "b"), timestamps=("d0",), values=values, horizon=1, demeaned=True)
        out = rotate_and_scale(panel, eb)
        assert np.linalg.norm(out.values) == pytest.approx(5.0, abs=1e-12)

    def test_components_standardized_under_exact_basis(self):
        rng = np.random.default_rng(10)
        t_tot = 40000
        sigma = np.diag([4.0, 1.0])
        values = np.sqrt(np.diag(sigma))[:, None] * rng.standard_normal((2, t_tot))
        eb = eigendecompose(CovarianceMatrix(sigma))
        out = rotate_and_scale(panel_from(values), eb)
        variances = out.values.var(axis=1)
        assert np.all(np.abs(variances - 1.0) < 3.0 / np.sqrt(t_tot))

    def test_dimension_mismatch(self):
        eb = eigendecompose(CovarianceMatrix(np.eye(3)))
        with pytest.raises(ValueError, match="dimension"):
            rotate_and_scale(panel_from(np.zeros((2, 10))), eb)

    def test_whitening_roundtrip_gives_identity(self):
        rng = np.random.default_rng(10)
        raw = rng.standard_normal((4, 2000))
        mix = rng.standard_normal((4, 4))
        values = mix @ raw
        values -= values.mean(axis=1, keepdims=True)
        panel = panel_from(values)
        eb = eigendecompose(total_covariance(panel))
        out = rotate_and_scale(panel, eb)
        cov = out.values @ out.values.T / out.values.shape[1]
        assert np.allclose(cov, np.eye(4), atol=1e-8)


class TestLocalVariances:
    def test_constant_block_zero_variance(self):
        values = np.ones((2, 20))
        panel = rotate_like(values)
        out = local_variances(panel, 5, recenter=True)
        assert np.allclose(out.values, 0.0, atol=1e-16)

    def test_pooled_count(self):
        rng = np.random.default_rng(11)
        panel = rotate_like(rng.standard_normal((7, 103)))
        out = local_variances(panel, 10)
        assert len(out) == 7 * (103 // 10)

    def test_overlapping_count(self):
        rng = np.random.default_rng(12)
        panel = rotate_like(rng.standard_normal((3, 50)))
        out = local_variances(panel, 5, overlapping=True)
        assert len(out) == 3 * (50 - 5 + 1)
        assert out.meta["overlapping"] is True

    def test_block_constant_compound_matches_variance_law(self):
        # x0 per block from the (N, L) = (8, 2) variance law; with w = 100 the
        # chi^2_w/w estimator smearing sits below the 0.02 KS budget at 1e5 values
        rng = np.random.default_rng(13)
        w = 100
        k, n_blocks = 100, 1000
        x0 = rng.gamma(4.0, 2.0, (k, n_blocks)) / rng.gamma(5.0, 2.0, (k, n_blocks))
        noise = rng.standard_normal((k, n_blocks, w))
        values = (np.sqrt(x0)[..., None] * noise).reshape(k, n_blocks * w)
        out = local_variances(rotate_like(values), w)
        assert len(out) == 100000
        ks = ks_distance(out.values, lambda v: special.betainc(4.0, 5.0, v / (1.0 + v)))
        assert ks < 0.02

    def test_window_validation(self):
        panel = rotate_like(np.zeros((2, 10)))
        with pytest.raises(ValueError, match="w must be >= 2"):
            local_variances(panel, 1)
        with pytest.raises(ValueError, match="shorter"):
            local_variances(rotate_like(np.zeros((2, 3))), 5)

    def test_serialization(self, tmp_path):
        panel = rotate_like(np.random.default_rng(1).standard_normal((2, 20)))
        out = local_variances(panel, 5)
        out.to_tsv(tmp_path / "vs.tsv")
        out.to_text(tmp_path / "vs.txt")
        assert (tmp_path / "vs.tsv").read_text().startswith("variance\n")
        assert len((tmp_path / "vs.txt").read_text().splitlines()) == len(out)


class TestTraceDistribution:
    def test_point_mass(self):
        cm = CovarianceMatrix(np.eye(3) * 2.0)
        seq = CovarianceSequence(matrices=(cm, cm, cm), window=5, stride=1)
        hist = trace_distribution(seq, bins=10, density=False)
        assert np.all(hist.values == 2.0)
        assert hist.counts.sum() == 3

    def test_undeformed_scalar_traces_follow_chi2(self):
        # K=1 model matrices with iid standard normal entries: s = Tr AA^T/N ~ chi^2_N / N
        rng = np.random.default_rng(14)
        n_dof, draws = 10, 10**5
        a = rng.standard_normal((draws, n_dof))
        traces = (a**2).mean(axis=1)  # = AA^T/N for K=1
        matrices = tuple(
            CovarianceMatrix(np.array([[t]]), window=(0, n_dof - 1), n_obs=n_dof) for t in traces
        )
        seq = CovarianceSequence(matrices=matrices, window=n_dof, stride=1)
        hist = trace_distribution(seq, normalize_by=np.eye(1), bins=80)
        ks = ks_distance(hist.values, stats.gamma(a=n_dof / 2.0, scale=2.0 / n_dof).cdf)
        assert ks < 0.02

    def test_normalization_needs_invertible_sigma(self):
        cm = CovarianceMatrix(np.eye(2))
        seq = CovarianceSequence(matrices=(cm,), window=3, stride=1)
        with pytest.raises(ValueError, match="singular"):
            trace_distribution(seq, normalize_by=np.diag([1.0, 0.0]))

    def test_empirical_rolling_diagnostic(self):
        # end-to-end smoke on real-shaped input: emitted for inspection only
        rng = np.random.default_rng(15)
        values = rng.standard_normal((4, 600))
        panel = demean(panel_from(values, demeaned=False))
        seq = rolling_covariance(panel, 63, stride=63)
        hist = trace_distribution(seq, normalize_by=total_covariance(panel), bins=12)
        assert hist.counts.shape == (12,)
        assert np.all(hist.values > 0.0)

    def test_empty_sequence(self):
        with pytest.raises(ValueError, match="empty"):
            trace_distribution(CovarianceSequence(matrices=(), window=5, stride=1))


def rotate_like(values: np.ndarray):
    from ensemble_forge.covariance import NormalizedPanel

    k, t = values.shape
    return NormalizedPanel(
        tickers=tuple(f"T{i}" for i in range(k)),
        timestamps=tuple(f"d{j:06d}" for j in range(t)),
        values=values,
        horizon=1,
    )
