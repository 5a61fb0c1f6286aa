import math

import numpy as np
import pytest

from calore.sim.galerkin import (
    StateVector,
    SystemSpec,
    assemble,
    embed,
    l2_norm_sq,
    poly_x_1mx,
    project_initial,
    reconstruct,
)
from calore.spectral.basis import triple_product
from calore.spectral.covariance import DiagonalSpectral, alpha_matrix
from calore.spectral.quadrature import composite_gauss_legendre

SINGLE = DiagonalSpectral((1.0,))


def _spec(n, m, beta0=0.0, beta1=1.0, model=SINGLE, diffusion=1.0):
    return SystemSpec(n=n, m=m, beta0=beta0, beta1=beta1, covariance=model, diffusion=diffusion)


def test_spec_validation():
    with pytest.raises(ValueError):
        _spec(0, 1)
    with pytest.raises(ValueError):
        _spec(1, 0)
    with pytest.raises(ValueError):
        _spec(1, 1, diffusion=0.0)
    assert _spec(3, 7).basis.n_max == 7


def test_assemble_scalar_system():
    sys = assemble(_spec(1, 1))
    assert np.allclose(sys.drift_diag, [math.pi**2])
    assert sys.noise_mats.shape == (1, 1, 1)
    assert sys.noise_mats[0, 0, 0] == pytest.approx(8 * math.sqrt(2) / (3 * math.pi))


def test_assemble_parity_pattern():
    sys = assemble(_spec(2, 1, beta0=1.0))
    assert np.allclose(sys.drift_diag, [math.pi**2 + 1, 4 * math.pi**2 + 1])
    a1 = sys.noise_mats[0]
    assert a1[0, 1] == 0.0 and a1[1, 0] == 0.0
    assert a1[0, 0] == pytest.approx(triple_product(1, 1, 1), rel=1e-15)
    assert a1[1, 1] == pytest.approx(triple_product(1, 2, 2), rel=1e-15)


def test_diffusion_scales_drift():
    sys = assemble(_spec(3, 1, beta0=2.0, diffusion=0.5))
    ks = np.arange(1, 4)
    assert np.allclose(sys.drift_diag, 0.5 * ks**2 * math.pi**2 + 2.0)


def test_noise_operator_matches_matrices():
    sys = assemble(_spec(5, 3, model=DiagonalSpectral.power_law(2.0, 3)))
    rng = np.random.default_rng(0)
    u = rng.standard_normal((4, 5))
    direct = np.einsum("jki,pi->pjk", sys.noise_mats, u)
    via = (u @ sys.noise_operator).reshape(4, 3, 5)
    assert np.allclose(direct, via, atol=1e-13)


def test_assemble_reuses_larger_alpha():
    model = DiagonalSpectral.power_law(2.0, 6)
    big = alpha_matrix(model, 6)
    sys = assemble(_spec(4, 3, model=model), alpha=big)
    assert sys.alpha.m == 3
    with pytest.raises(ValueError):
        assemble(_spec(4, 6, model=model), alpha=alpha_matrix(model, 2))


def test_with_drift():
    sys = assemble(_spec(3, 2))
    zero = sys.with_drift([0.0, 0.0, 0.0])
    assert np.array_equal(zero.drift_diag, np.zeros(3))
    assert np.array_equal(zero.noise_mats, sys.noise_mats)
    with pytest.raises(ValueError):
        sys.with_drift([0.0])


def test_project_polynomial_initial():
    state = project_initial(poly_x_1mx, 3)
    c = 4 * math.sqrt(2) / math.pi**3
    assert np.allclose(state.coefficients, [c, 0.0, c / 27], atol=1e-12)
    assert state.coefficients[0] == pytest.approx(0.18246, abs=1e-5)
    assert state.coefficients[2] == pytest.approx(0.0067578, abs=1e-7)


def test_project_eigenfunction_and_zero():
    e1 = project_initial(lambda x: math.sqrt(2) * np.sin(math.pi * x), 6)
    assert np.allclose(e1.coefficients, [1, 0, 0, 0, 0, 0], atol=1e-12)
    zero = project_initial(lambda x: np.zeros_like(x), 4)
    assert np.array_equal(zero.coefficients, np.zeros(4))


def test_project_coefficient_list():
    assert np.array_equal(project_initial([1.0, 2.0, 3.0], 2).coefficients, [1.0, 2.0])
    assert np.array_equal(project_initial([1.0], 3).coefficients, [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        project_initial([1.0], 0)


def test_state_vector_is_read_only():
    s = StateVector([1.0, 2.0])
    assert s == StateVector(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        s.coefficients[0] = 5.0


def test_reconstruct():
    e1 = StateVector([1.0, 0.0, 0.0])
    assert reconstruct(e1, [0.5])[0] == pytest.approx(math.sqrt(2))
    assert reconstruct(e1, [0.0])[0] == 0.0
    series = project_initial(poly_x_1mx, 21)
    assert reconstruct(series, [0.25])[0] == pytest.approx(0.1875, abs=1e-4)
    with pytest.raises(ValueError):
        reconstruct(e1, [1.2])


def test_l2_norm():
    assert l2_norm_sq(StateVector([3.0, 4.0])) == 25.0
    assert l2_norm_sq(StateVector(np.zeros(5))) == 0.0
    assert l2_norm_sq(project_initial(poly_x_1mx, 50)) == pytest.approx(1 / 30, abs=1e-8)


@pytest.mark.parametrize("n", [1, 5, 20])
def test_parseval(n):
    state = StateVector(np.random.default_rng(n).standard_normal(n))
    xs, ws = composite_gauss_legendre(4000)
    u = reconstruct(state, xs)
    assert float(ws @ (u * u)) == pytest.approx(l2_norm_sq(state), abs=1e-8)


def test_embed():
    out = embed(np.array([[1.0, 2.0]]), 4)
    assert np.array_equal(out, [[1.0, 2.0, 0.0, 0.0]])
    with pytest.raises(ValueError):
        embed(np.ones(5), 3)
