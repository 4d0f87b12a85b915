
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import metrics_oracle

from vidsev import DomainError, compute_metrics


class TestExamples:
    def test_perfect_prediction(self):
        r = compute_metrics([1.0, 2.0, 5.0], [1.0, 2.0, 5.0])
        assert (r.rmse, r.mae, r.pcc, r.ccc) == (0.0, 0.0, 1.0, 1.0)

    def test_constant_shift(self):
        # predictions = labels + 2 on (0, 1, 2): population variance 2/3,
        # so ccc = 2*(2/3) / (2/3 + 2/3 + 4) = 0.25
        r = compute_metrics([2.0, 3.0, 4.0], [0.0, 1.0, 2.0])
        assert r.rmse == pytest.approx(2.0, abs=1e-12)
        assert r.mae == pytest.approx(2.0, abs=1e-12)
        assert r.pcc == pytest.approx(1.0, abs=1e-12)
        assert r.ccc == pytest.approx(0.25, abs=1e-12)

    def test_perfect_anticorrelation(self):
        g = [-1.0, 0.0, 1.0]
        r = compute_metrics([1.0, 0.0, -1.0], g)
        assert r.pcc == pytest.approx(-1.0, abs=1e-12)

    def test_constant_ground_truth_undefined(self):
        r = compute_metrics([1.0, 2.0, 3.0], [4.0, 4.0, 4.0])
        assert r.pcc is None
        assert r.rmse >= r.mae

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            compute_metrics([1.0, 2.0], [1.0])

    def test_too_short(self):
        with pytest.raises(DomainError):
            compute_metrics([1.0], [1.0])

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            compute_metrics([1.0, float("nan")], [1.0, 2.0])


class TestOracleAgreement:
    def test_many_fixed_vectors(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = int(rng.integers(2, 30))
            p = rng.normal(size=n) * rng.uniform(0.5, 20)
            g = rng.normal(size=n) * rng.uniform(0.5, 20) + rng.uniform(-5, 5)
            got = compute_metrics(p, g)
            want = metrics_oracle(p.tolist(), g.tolist())
            assert got.rmse == pytest.approx(want["rmse"], abs=1e-9)
            assert got.mae == pytest.approx(want["mae"], abs=1e-9)
            assert got.pcc == pytest.approx(want["pcc"], abs=1e-9)
            assert got.ccc == pytest.approx(want["ccc"], abs=1e-9)


class TestIdentities:
    def test_random_identities(self):
        rng = np.random.default_rng(12)
        for _ in range(300):
            n = int(rng.integers(2, 20))
            p = rng.normal(size=n)
            g = rng.normal(size=n)
            r = compute_metrics(p, g)
            assert r.rmse >= r.mae >= 0.0
            if r.pcc is not None and r.ccc is not None:
                assert abs(r.ccc) <= abs(r.pcc) + 1e-12

    def test_rmse_equals_mae_for_equal_absolute_errors(self):
        r = compute_metrics([1.0, -1.0, 3.0], [0.0, 0.0, 2.0])
        assert r.rmse == pytest.approx(r.mae, abs=1e-12)

    @given(
        scale=st.floats(0.01, 50.0),
        shift=st.floats(-100.0, 100.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_pcc_affine_invariant(self, scale, shift):
        rng = np.random.default_rng(13)
        p = rng.normal(size=12)
        g = rng.normal(size=12)
        base = compute_metrics(p, g)
        moved = compute_metrics(scale * p + shift, g)
        assert moved.pcc == pytest.approx(base.pcc, abs=1e-8)

    def test_ccc_equals_pcc_when_moments_match(self):
        # construct predictions with the labels' exact mean and variance
        rng = np.random.default_rng(14)
        g = rng.normal(size=40)
        p = rng.normal(size=40)
        p = (p - p.mean()) / p.std() * g.std() + g.mean()
        r = compute_metrics(p, g)
        assert r.ccc == pytest.approx(r.pcc, abs=1e-9)
