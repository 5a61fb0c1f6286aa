import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from calore.analysis.stability import (
    AnalyticClassifier,
    MonteCarloClassifier,
    axis,
    boundary_beta0,
    build_stability_report,
    cell_seed,
    check_exact,
    check_explicit,
    check_spectral,
    ci_covers,
    classify_decay,
    implicit_amplification,
    region_sweep,
    sum_q,
)
from calore.domain.models import MeanSquareCurve
from calore.sim.galerkin import SystemSpec
from calore.spectral.covariance import AlphaMatrix, DiagonalSpectral, KernelQuadrature, kappa

PI2 = math.pi**2
KT2_SCALAR = (8 * math.sqrt(2) / (3 * math.pi)) ** 2

finite = dict(allow_nan=False, allow_infinity=False)


def _region_template(exponent=1.001, n=8):
    return SystemSpec(n=n, m=n, beta0=0.0, beta1=1.0,
                      covariance=DiagonalSpectral.power_law(exponent, 100))


def test_check_exact_examples():
    ok = check_exact(PI2, 1.0, 1.0, 2.0)
    assert ok.margin == pytest.approx(2 * (PI2 + 1) - 2)
    assert ok.margin == pytest.approx(19.739, abs=1e-3)
    assert ok.verdict is True
    boundary = check_exact(PI2, -PI2, 0.0, 2.0)
    assert boundary.margin == 0.0
    assert boundary.verdict is False
    bad = check_exact(PI2, 0.0, 10.0, 2.0)
    assert bad.margin == pytest.approx(2 * PI2 - 200)
    assert bad.verdict is False


def test_infinite_kappa_is_inapplicable():
    chk = check_exact(PI2, 1.0, 1.0, math.inf)
    assert chk.verdict is None and chk.margin is None
    assert not chk.applicable
    assert check_spectral(PI2, 1.0, 1.0, 1.0).applicable


@given(
    st.floats(-20, 20, **finite),
    st.floats(0, 10, **finite),
    st.floats(0, 10, **finite),
    st.floats(0, 10, **finite),
)
def test_margin_monotone(beta0, beta1, extra, kappa_value):
    base = check_exact(PI2, beta0, beta1, kappa_value).margin
    assert check_exact(PI2, beta0, beta1 + extra, kappa_value).margin <= base
    assert check_exact(PI2, beta0 + extra, beta1, kappa_value).margin >= base


def test_implicit_amplification_examples():
    r = implicit_amplification(0.01, PI2, 0.0, 1.0, 1.4410083)
    assert r == pytest.approx(1.014410083 / (1 + 0.01 * PI2) ** 2, rel=1e-12)
    assert r == pytest.approx(0.84035, abs=1e-5)
    assert implicit_amplification(0.1, PI2, 3.0, 0.0, 5.0) < 1.0
    with pytest.raises(ValueError):
        implicit_amplification(1.0, PI2, -20.0, 1.0, 1.0)


def test_implicit_small_step_expansion():
    tau, beta0, beta1 = 1e-6, 1.0, 1.0
    r = implicit_amplification(tau, PI2, beta0, beta1, KT2_SCALAR)
    margin = 2 * (PI2 + beta0) - beta1**2 * KT2_SCALAR
    assert r < 1.0
    assert abs(r - (1 - tau * margin)) < 1e-9


def test_explicit_examples():
    lhs = check_explicit(0.25, [PI2], 0.0, 0.0)
    assert lhs.margin == pytest.approx(2.1533, abs=1e-4)
    assert lhs.verdict is False
    ok = check_explicit(0.01, [PI2], 0.0, 0.0)
    assert ok.margin == pytest.approx(0.81234, abs=1e-5)
    assert ok.verdict is True
    drift = PI2 * np.arange(1, 6) ** 2
    tau = 1.9 / drift.max()
    assert check_explicit(tau, drift, 0.0, 3.0).verdict is True
    with pytest.raises(ValueError):
        check_explicit(0.0, drift, 0.0, 3.0)


@given(
    st.floats(1e-4, 0.03, **finite),
    st.floats(-9, 20, **finite),
    st.floats(0, 2, **finite),
    st.floats(0, 5, **finite),
)
def test_explicit_stable_implies_implicit_stable(tau, beta0, beta1, kt2):
    chk = check_explicit(tau, [PI2 + beta0, 4 * PI2 + beta0], beta1, kt2)
    assume(chk.margin < 1.0 - 1e-9)
    assert implicit_amplification(tau, PI2, beta0, beta1, kt2) < 1.0


def test_sum_q():
    model = DiagonalSpectral.power_law(2.0, 3)
    assert sum_q(model) == pytest.approx(1 + 0.25 + 1 / 9)
    # fBm con H = 1/2: ∫ 2x dx = 1
    assert sum_q(KernelQuadrature(family="fbm-field", hurst=0.5)) == pytest.approx(1.0, abs=1e-10)
    assert math.isinf(sum_q(KernelQuadrature(family="fractional-gaussian", hurst=0.7)))


def test_report_for_decay_parameters():
    model = DiagonalSpectral.power_law(1.001, 100)
    spec = SystemSpec(n=20, m=20, beta0=1.0, beta1=1.0, covariance=model)
    report = build_stability_report(spec, 0.001)
    k = kappa(model)
    assert report.kappa_applicable
    assert report.kappa == pytest.approx(k)
    assert report.cond_exact == pytest.approx(2 * (PI2 + 1) - k)
    assert report.verdicts.exact is True
    assert report.verdicts.implicit is True
    assert report.verdicts.spectral is True
    assert report.kappa_tilde2 <= report.kappa_tilde1_approx * (1 + 1e-12)
    assert report.kappa_tilde1_approx <= report.kappa
    assert report.rho_at_m == pytest.approx(20**-1.001)
    assert report.physical_margin is None and report.verdicts.physical is None

    louder = build_stability_report(replace(spec, beta1=10.0), 0.001, with_kappa_tilde1=False)
    assert louder.verdicts.exact is False
    assert louder.kappa_tilde1_approx is None


def test_report_records_cholesky_jitter(monkeypatch):
    spec = SystemSpec(n=2, m=2, beta0=1.0, beta1=1.0, covariance=DiagonalSpectral((1.0, 1.0)))
    assert build_stability_report(spec, 0.01, with_kappa_tilde1=False).cholesky_jitter == 0.0
    singular = AlphaMatrix(m=2, entries=np.ones((2, 2)), diagonal=False)
    monkeypatch.setattr("calore.analysis.stability.alpha_matrix", lambda model, m: singular)
    report = build_stability_report(spec, 0.01, with_kappa_tilde1=False)
    assert report.cholesky_jitter == 1e-12
    assert any("jitter" in w for w in report.warnings)
    assert json.loads(report.model_dump_json())["cholesky_jitter"] == 1e-12


def test_report_singular_kernel():
    spec = SystemSpec(n=4, m=4, beta0=1.0, beta1=1.0,
                      covariance=KernelQuadrature(family="fractional-gaussian", hurst=0.7))
    report = build_stability_report(spec, 0.01)
    assert not report.kappa_applicable
    assert report.verdicts.exact is None
    assert report.warnings
    data = json.loads(report.model_dump_json())
    assert data["kappa"] is None


def test_report_physical_mapping():
    model = DiagonalSpectral.power_law(1.001, 10)
    spec = SystemSpec(n=8, m=8, beta0=0.0, beta1=0.5, covariance=model, diffusion=0.5)
    report = build_stability_report(spec, 0.001, with_kappa_tilde1=False, physical=(1.0, 0.25))
    assert report.lambda1 == pytest.approx(0.5 * PI2)
    assert report.physical_margin == pytest.approx(-PI2 + 0.25 * model.sum_weights())
    assert report.verdicts.physical is True


def test_classify_decay():
    t = np.linspace(0, 1, 101)
    decaying = MeanSquareCurve(t=t.tolist(), mean_sq=np.exp(-4 * t).tolist(),
                               ci_halfwidth=[0.0] * 101, paths=100)
    stable, rate = classify_decay(decaying)
    assert stable and rate == pytest.approx(-4.0)
    growing = decaying.model_copy(update={"mean_sq": np.exp(4 * t).tolist()})
    assert classify_decay(growing)[0] is False
    diverged = decaying.model_copy(update={"diverged_count": 3})
    assert classify_decay(diverged) == (False, math.inf)
    underflow = decaying.model_copy(update={"mean_sq": [1.0] * 60 + [0.0] * 41})
    assert classify_decay(underflow) == (True, -math.inf)


def test_cell_seed_and_axis():
    assert cell_seed(7, 3) == cell_seed(7, 3)
    assert len({cell_seed(7, i) for i in range(50)}) == 50
    assert axis(2.0, 5.0, 1) == [2.0]
    assert axis(0.0, 1.0, 3) == [0.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        axis(1.0, 0.0, 4)
    with pytest.raises(ValueError):
        axis(0.0, 1.0, 0)


def test_ci_covers_and_boundary():
    curve = MeanSquareCurve(t=[0, 1, 2], mean_sq=[1.0, 0.5, 0.25], ci_halfwidth=[0, 0.1, 0.01], paths=10)
    assert ci_covers(curve, [1.0, 0.55, 0.3]) == 0.5
    assert boundary_beta0(2.0, 3.0, PI2) == pytest.approx(6.0 - PI2)


def test_region_analytic_inside_numeric():
    grid = region_sweep(_region_template(), (0.0, 6.0, 16), (-12.0, 12.0, 16), 0.01)
    assert len(grid.cells) == 256
    assert grid.classifier == "analytic"
    assert grid.stable_set("analytic") <= grid.stable_set("numeric")
    assert grid.stable_set("analytic")
    for i0, beta0 in enumerate(grid.beta0_axis):
        cell = grid.cell(0, i0)
        assert cell.beta1 == 0.0 and cell.beta0 == beta0
        assert cell.numeric_stable == (grid.lambda1 + beta0 > 0)
        assert cell.analytic_stable == (grid.lambda1 + beta0 > 0)


def test_region_explicit_inside_implicit():
    template = _region_template()
    b1, b0 = (0.0, 6.0, 12), (-12.0, 12.0, 12)
    implicit = region_sweep(template, b1, b0, 0.01, "implicit")
    explicit = region_sweep(template, b1, b0, 0.002, "explicit")
    implicit_small = region_sweep(template, b1, b0, 0.002, "implicit")
    assert explicit.stable_set() <= implicit_small.stable_set()
    assert implicit.stable_set()


def test_region_smoother_noise_is_larger():
    b1, b0 = (0.0, 6.0, 16), (-12.0, 12.0, 16)
    rough = region_sweep(_region_template(1.001), b1, b0, 0.01)
    smooth = region_sweep(_region_template(2.001), b1, b0, 0.01)
    assert rough.stable_set() <= smooth.stable_set()
    assert rough.stable_set("analytic") <= smooth.stable_set("analytic")
    assert len(smooth.stable_set()) > len(rough.stable_set())


def test_region_single_cell():
    grid = region_sweep(_region_template(), (1.0, 1.0, 1), (10.0, 10.0, 1), 0.01)
    assert len(grid.cells) == 1
    assert grid.cells[0].analytic_stable and grid.cells[0].numeric_stable


def test_region_argument_checks():
    with pytest.raises(ValueError):
        region_sweep(_region_template(), (0, 1, 2), (0, 1, 2), 0.01, "stiff-implicit", AnalyticClassifier())
    with pytest.raises(ValueError):
        MonteCarloClassifier(paths=50)
    with pytest.raises(ValueError):
        region_sweep(_region_template(), (0, 1, 2), (0, 1, 2), 0.0)


def test_region_monte_carlo_deterministic_cells():
    template = _region_template(n=4)
    clf = MonteCarloClassifier(paths=100, horizon=1.0, seed=3)
    grid = region_sweep(template, (0.0, 8.0, 2), (-15.0, 10.0, 2), 0.01, "stiff-implicit", clf,
                        threads=1)
    assert grid.classifier == "monte_carlo"
    assert grid.cell(0, 1).numeric_stable is True
    assert grid.cell(0, 0).numeric_stable is False
    again = region_sweep(template, (0.0, 8.0, 2), (-15.0, 10.0, 2), 0.01, "stiff-implicit", clf,
                         threads=2)
    assert again == grid


@pytest.mark.slow
def test_region_analytic_inside_monte_carlo():
    clf = MonteCarloClassifier(paths=100, horizon=2.0, seed=9)
    grid = region_sweep(_region_template(n=4), (0.0, 6.0, 8), (-12.0, 12.0, 8), 0.01, "implicit", clf,
                        threads=2)
    assert len(grid.cells) == 64
    assert grid.stable_set("analytic")
    for i1 in range(8):
        for i0 in range(8):
            cell = grid.cell(i1, i0)
            if cell.analytic_stable:
                assert cell.numeric_stable, (cell.beta1, cell.beta0)
