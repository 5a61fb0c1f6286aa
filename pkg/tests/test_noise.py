import math

import numpy as np
import pytest

from calore.sim.noise import (
    NoisePathConfig,
    generate_batch,
    generate_increments,
    restrict_increments,
)
from calore.spectral.covariance import DiagonalSpectral, KernelQuadrature, alpha_matrix


def _chol(weights):
    return alpha_matrix(DiagonalSpectral(tuple(weights)), len(weights)).chol


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(m=0, tau=0.1, n_steps=5, base_seed=1),
        dict(m=2, tau=0.0, n_steps=5, base_seed=1),
        dict(m=2, tau=0.1, n_steps=0, base_seed=1),
        dict(m=2, tau=0.1, n_steps=5, base_seed=-1),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        NoisePathConfig(**kwargs)


def test_same_config_is_bit_identical():
    chol = _chol([1.0, 0.5, 0.25])
    cfg = NoisePathConfig(m=3, tau=0.01, n_steps=50, base_seed=42, path_index=7)
    a = generate_increments(chol, cfg)
    b = generate_increments(chol, cfg)
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == (3, 50)


def test_paths_and_seeds_differ():
    chol = _chol([1.0, 1.0])
    a = generate_increments(chol, NoisePathConfig(m=2, tau=0.01, n_steps=20, base_seed=1, path_index=0))
    b = generate_increments(chol, NoisePathConfig(m=2, tau=0.01, n_steps=20, base_seed=1, path_index=1))
    c = generate_increments(chol, NoisePathConfig(m=2, tau=0.01, n_steps=20, base_seed=2, path_index=0))
    assert not np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_fewer_modes_do_not_shift_draws():
    chol = _chol([1.0, 0.5, 0.25, 0.125])
    fine = generate_increments(chol, NoisePathConfig(m=4, tau=0.01, n_steps=30, base_seed=3))
    coarse = generate_increments(chol, NoisePathConfig(m=2, tau=0.01, n_steps=30, base_seed=3))
    assert np.array_equal(fine.values[:2], coarse.values)
    assert np.array_equal(restrict_increments(fine, 2).values, coarse.values)


def test_restrict_increments():
    chol = _chol([1.0, 0.5, 0.25, 0.125])
    inc = generate_increments(chol, NoisePathConfig(m=4, tau=0.01, n_steps=10, base_seed=0))
    sub = restrict_increments(inc, 2)
    assert sub.m == 2
    assert sub.config.m == 2
    assert np.array_equal(sub.values, inc.values[:2])
    assert restrict_increments(inc, 4) is inc
    with pytest.raises(ValueError):
        restrict_increments(inc, 5)


def test_restrict_rejects_dense_noise():
    chol = alpha_matrix(KernelQuadrature(family="fbm-field", hurst=0.7), 3).chol
    inc = generate_increments(chol, NoisePathConfig(m=3, tau=0.01, n_steps=10, base_seed=0))
    assert not inc.diagonal
    with pytest.raises(ValueError):
        restrict_increments(inc, 2)


def test_factor_too_small():
    with pytest.raises(ValueError):
        generate_increments(_chol([1.0]), NoisePathConfig(m=2, tau=0.1, n_steps=3, base_seed=0))


def test_identity_covariance_statistics():
    tau, n = 0.01, 100_000
    inc = generate_increments(_chol([1.0, 1.0]), NoisePathConfig(m=2, tau=tau, n_steps=n, base_seed=11))
    cov = np.cov(inc.values, bias=True)
    se_diag = tau * math.sqrt(2.0 / n)
    se_off = tau / math.sqrt(n)
    assert abs(cov[0, 0] - tau) < 4 * se_diag
    assert abs(cov[1, 1] - tau) < 4 * se_diag
    assert abs(cov[0, 1]) < 4 * se_off
    for row in inc.values:
        lag1 = np.corrcoef(row[:-1], row[1:])[0, 1]
        assert abs(lag1) < 4 / math.sqrt(n)


def test_dense_covariance_statistics():
    tau, n = 0.01, 100_000
    alpha = alpha_matrix(KernelQuadrature(family="fbm-field", hurst=0.7), 3)
    inc = generate_increments(alpha.chol, NoisePathConfig(m=3, tau=tau, n_steps=n, base_seed=5))
    cov = inc.values @ inc.values.T / n
    a = alpha.entries
    for i in range(3):
        for j in range(3):
            se = tau * math.sqrt((a[i, i] * a[j, j] + a[i, j] ** 2) / n)
            assert abs(cov[i, j] - tau * a[i, j]) < 4 * se


def test_generate_batch_layout():
    chol = _chol([1.0, 0.5, 0.25])
    batch = generate_batch(chol, 3, 0.01, 12, 9, range(4, 7))
    assert batch.shape == (12, 3, 3)
    for p, idx in enumerate(range(4, 7)):
        single = generate_increments(
            chol, NoisePathConfig(m=3, tau=0.01, n_steps=12, base_seed=9, path_index=idx)
        )
        assert np.array_equal(batch[:, p, :], single.values.T)
