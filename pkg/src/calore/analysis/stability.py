"""
@file stability.py
@brief Condizioni di stabilità in media quadratica, fattori di amplificazione
       degli schemi e mappe di stabilità nel piano (β1, β0).
@ingroup analysis_module

@details
Condizioni valutate (margine > 0 = stabile):
- esatta:     2(λ1 + β0) − β1²κ
- spettrale:  2(λ1 + β0) − β1²κ̃2
- κ̃1:        2(λ1 + β0) − β1²κ̃1 (κ̃1 approssimato)
- Σq:         2(λ1 + β0) − β1²Σq_j
Per gli schemi: rapporto implicito (1 + τκ̃2β1²)/(1 + τ(λ1+β0))² < 1 e
lato sinistro esplicito max_k (1 − τd_k)² + τκ̃2β1² < 1.
Lo schema implicito-stiff si classifica solo via Monte Carlo.
"""

from __future__ import annotations
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from calore.domain.models import MeanSquareCurve, RegionCell, RegionGrid, StabilityReport, Verdicts
from calore.errors import AllPathsDivergedError, FactorizationError
from calore.sim.galerkin import StateVector, SystemSpec, assemble
from calore.sim.integrators import StepScheme
from calore.sim.montecarlo import EnsembleConfig, decay_rate_fit, mean_square_curve, run_ordered
from calore.spectral.basis import build_tensor, eigenvalue, eigenvalues
from calore.spectral.covariance import (
    CovarianceModel,
    DiagonalSpectral,
    alpha_matrix,
    kappa,
    kappa_tilde1_approx,
    kappa_tilde2,
    rho,
)
from calore.spectral.quadrature import gauss_legendre

logger = logging.getLogger(__name__)

MIN_MC_PATHS = 100


@dataclass(frozen=True)
class ConditionCheck:
    """@brief Margine e verdetto di una condizione; verdict None se non applicabile."""
    margin: float | None
    verdict: bool | None

    @property
    def applicable(self) -> bool:
        return self.verdict is not None


def _margin(lambda1: float, beta0: float, beta1: float, scalar: float) -> ConditionCheck:
    if not math.isfinite(scalar):
        return ConditionCheck(margin=None, verdict=None)
    if scalar < 0.0:
        raise ValueError(f"scalare di stabilità negativo: {scalar}")
    margin = 2.0 * (lambda1 + beta0) - beta1 * beta1 * scalar
    return ConditionCheck(margin=margin, verdict=margin > 0.0)


def check_exact(lambda1: float, beta0: float, beta1: float, kappa: float) -> ConditionCheck:
    """
    @brief Condizione 2(λ1 + β0) − β1²κ > 0.
    @param kappa κ = sup q(ξ,ξ); se infinito o NaN il verdetto è "non applicabile".
    @return ConditionCheck con margine e verdetto (margine nullo = non stabile).
    """
    return _margin(lambda1, beta0, beta1, kappa)


def check_spectral(lambda1: float, beta0: float, beta1: float, kappa_tilde2: float) -> ConditionCheck:
    """@brief Condizione sul sistema troncato: 2(λ1 + β0) − β1²κ̃2 > 0."""
    return _margin(lambda1, beta0, beta1, kappa_tilde2)


def implicit_amplification(
    tau: float, lambda1: float, beta0: float, beta1: float, kappa_tilde2: float
) -> float:
    """
    @brief Fattore per passo dell'Euler implicito: (1 + τκ̃2β1²)/(1 + τ(λ1+β0))².
    @throws ValueError Se 1 + τ(λ1+β0) <= 0.
    """
    den = 1.0 + tau * (lambda1 + beta0)
    if den <= 0.0:
        raise ValueError(f"1 + τ(λ1+β0) = {den:.3g} <= 0: passo implicito mal posto")
    return (1.0 + tau * kappa_tilde2 * beta1 * beta1) / (den * den)


def check_explicit(
    tau: float,
    drift_diag: Sequence[float] | np.ndarray,
    beta1: float,
    kappa_tilde2: float,
) -> ConditionCheck:
    """
    @brief Condizione dell'Euler esplicito: max_k (1 − τd_k)² + τκ̃2β1² < 1.
    @return ConditionCheck con margin = lato sinistro (non un margine positivo).
    """
    if not tau > 0.0:
        raise ValueError(f"tau deve essere > 0, ricevuto {tau}")
    d = np.asarray(drift_diag, dtype=float)
    lhs = float(np.max((1.0 - tau * d) ** 2)) + tau * kappa_tilde2 * beta1 * beta1
    return ConditionCheck(margin=lhs, verdict=lhs < 1.0)


def sum_q(model: CovarianceModel, nodes: int = 512) -> float:
    """@brief Σ q_j = traccia di Q = ∫ q(x,x) dx (inf per kernel singolari)."""
    if isinstance(model, DiagonalSpectral):
        return model.sum_weights()
    if model.family == "fractional-gaussian":
        return math.inf
    xs, ws = gauss_legendre(nodes)
    return float(ws @ model.diagonal(xs))


def build_stability_report(
    spec: SystemSpec,
    tau: float,
    scheme: StepScheme | str = StepScheme.IMPLICIT_EULER,
    *,
    with_kappa_tilde1: bool = True,
    physical: tuple[float, float] | None = None,
) -> StabilityReport:
    """
    @brief Calcola tutti gli scalari, i margini e i verdetti per uno spec.
    @param physical Coppia (ν, λ) se lo spec proviene dalla mappatura fisica
           con ½νΔ; aggiunge physical_margin = −νλ1 + λΣq.
    @return StabilityReport (κ infinito: verdetti esatti "non applicabili").
    """
    scheme = StepScheme(scheme)
    model = spec.covariance
    lam1 = spec.diffusion * eigenvalue(1)
    warnings: list[str] = []

    k = kappa(model)
    report = StabilityReport(
        n=spec.n, m=spec.m, beta0=spec.beta0, beta1=spec.beta1, tau=tau,
        scheme=str(scheme), covariance=model.label, lambda1=lam1,
    )
    verdicts = Verdicts()
    if not math.isfinite(k):
        msg = "κ infinito: condizioni di stabilità non applicabili"
        logger.warning(msg)
        warnings.append(msg)
        report.kappa_applicable = False
        report.sum_q = None
        report.verdicts = verdicts
        report.warnings = warnings
        return report

    exact = check_exact(lam1, spec.beta0, spec.beta1, k)
    report.kappa = k
    report.cond_exact = exact.margin
    verdicts.exact = exact.verdict

    sq = sum_q(model)
    report.sum_q = sq
    sq_check = _margin(lam1, spec.beta0, spec.beta1, sq)
    report.cond_sum_q = sq_check.margin
    verdicts.sum_q = sq_check.verdict

    alpha = alpha_matrix(model, spec.m)
    if alpha.quadrature_delta > 1e-6:
        warnings.append(f"quadratura α: scarto {alpha.quadrature_delta:.2e} tra le risoluzioni")
    try:
        jitter = alpha.chol.jitter
    except FactorizationError as exc:
        warnings.append(str(exc))
    else:
        report.cholesky_jitter = jitter
        if jitter > 0.0:
            warnings.append(f"Cholesky di α con jitter {jitter:.0e}")
    kt2 = kappa_tilde2(alpha, build_tensor(spec.n, spec.m), spec.n, spec.m)
    report.kappa_tilde2 = kt2
    spectral = check_spectral(lam1, spec.beta0, spec.beta1, kt2)
    report.cond_spectral = spectral.margin
    verdicts.spectral = spectral.verdict

    if with_kappa_tilde1:
        kt1 = kappa_tilde1_approx(model, spec.n, spec.m)
        report.kappa_tilde1_approx = kt1
        c1 = _margin(lam1, spec.beta0, spec.beta1, kt1)
        report.cond_kappa_tilde1 = c1.margin
        verdicts.kappa_tilde1 = c1.verdict

    report.rho_at_m = rho(model, spec.m)

    try:
        ratio = implicit_amplification(tau, lam1, spec.beta0, spec.beta1, kt2)
        report.implicit_ratio = ratio
        verdicts.implicit = ratio < 1.0
    except ValueError as exc:
        warnings.append(str(exc))
        verdicts.implicit = False

    drift = spec.diffusion * eigenvalues(spec.n) + spec.beta0
    expl = check_explicit(tau, drift, spec.beta1, kt2)
    report.explicit_lhs = expl.margin
    verdicts.explicit = expl.verdict

    if physical is not None:
        nu, lam = physical
        value = -nu * eigenvalue(1) + lam * sq
        report.physical_margin = value
        verdicts.physical = value < 0.0

    report.verdicts = verdicts
    report.warnings = warnings
    return report


@dataclass(frozen=True)
class AnalyticClassifier:
    """@brief Classificazione in forma chiusa (solo Euler implicito/esplicito)."""
    kind: str = "analytic"


@dataclass(frozen=True)
class MonteCarloClassifier:
    """
    @brief Classificazione per decadimento Monte Carlo.
    @details Stabile se rate + 2·stderr < threshold sulla seconda metà dell'orizzonte.
    """
    paths: int = 400
    horizon: float = 5.0
    threshold: float = 0.0
    seed: int = 0
    window: float = 0.5
    kind: str = "monte_carlo"

    def __post_init__(self) -> None:
        if self.paths < MIN_MC_PATHS:
            raise ValueError(f"il classificatore Monte Carlo richiede almeno {MIN_MC_PATHS} traiettorie")
        if not self.horizon > 0.0:
            raise ValueError(f"orizzonte deve essere > 0, ricevuto {self.horizon}")


Classifier = AnalyticClassifier | MonteCarloClassifier


def classify_decay(curve: MeanSquareCurve, threshold: float = 0.0, window: float = 0.5) -> tuple[bool, float]:
    """
    @brief Verdetto di decadimento di una curva e tasso stimato.
    @return (stabile, tasso). Curve con divergenze sono instabili; una coda
            scesa a 0 (underflow) è stabile.
    """
    if curve.diverged_count > 0:
        return False, math.inf
    tail = curve.mean_sq[len(curve.mean_sq) // 2:]
    if tail and tail[-1] == 0.0:
        return True, -math.inf
    fit = decay_rate_fit(curve, window)
    return fit.rate + 2.0 * fit.stderr < threshold, fit.rate


def cell_seed(base_seed: int, cell_index: int) -> int:
    """@brief Seed indipendente per cella, derivato da (base_seed, indice di cella)."""
    seq = np.random.SeedSequence(base_seed, spawn_key=(cell_index,))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def axis(lo: float, hi: float, count: int) -> list[float]:
    """@brief Campioni equispaziati di un asse (count=1 usa lo)."""
    if count < 1:
        raise ValueError(f"count deve essere >= 1, ricevuto {count}")
    if count == 1:
        return [float(lo)]
    if not hi > lo:
        raise ValueError(f"intervallo non crescente: [{lo}, {hi}]")
    return [float(v) for v in np.linspace(lo, hi, count)]


def region_sweep(
    template: SystemSpec,
    beta1_range: tuple[float, float, int],
    beta0_range: tuple[float, float, int],
    tau: float,
    scheme: StepScheme | str = StepScheme.IMPLICIT_EULER,
    classifier: Classifier | None = None,
    *,
    u0: StateVector | None = None,
    threads: int = 1,
) -> RegionGrid:
    """
    @brief Mappa di stabilità su una griglia (β1, β0).
    @param template Spec di partenza (N, M, covarianza, diffusion); β0 e β1 vengono sostituiti.
    @param beta1_range (min, max, conteggio).
    @param beta0_range (min, max, conteggio).
    @param classifier AnalyticClassifier (default) o MonteCarloClassifier.
    @param u0 Stato iniziale per il classificatore Monte Carlo (default e_1).
    @return RegionGrid con analytic_stable dalla condizione esatta e
            numeric_stable dallo schema.
    @throws ValueError Se lo schema implicito-stiff è chiesto con il classificatore analitico.
    """
    scheme = StepScheme(scheme)
    classifier = classifier or AnalyticClassifier()
    if not tau > 0.0:
        raise ValueError(f"tau deve essere > 0, ricevuto {tau}")
    if isinstance(classifier, AnalyticClassifier) and scheme is StepScheme.STIFF_IMPLICIT_EULER:
        raise ValueError("lo schema implicito-stiff si classifica solo con il classificatore monte_carlo")

    b1 = axis(*beta1_range)
    b0 = axis(*beta0_range)
    model = template.covariance
    lam1 = template.diffusion * eigenvalue(1)
    k = kappa(model)
    tensor = build_tensor(template.n, template.m)
    alpha = alpha_matrix(model, template.m)
    kt2 = kappa_tilde2(alpha, tensor, template.n, template.m)
    lam_vec = template.diffusion * eigenvalues(template.n)
    logger.info(
        "sweep %dx%d (%s, %s): κ=%.6g κ̃2=%.6g", len(b1), len(b0), scheme, classifier.kind, k, kt2
    )

    cells = [(i1, i0) for i0 in range(len(b0)) for i1 in range(len(b1))]
    start = u0 if u0 is not None else StateVector(np.eye(template.n)[0])

    def analytic_numeric(beta1: float, beta0: float) -> tuple[bool, float]:
        if scheme is StepScheme.IMPLICIT_EULER:
            try:
                r = implicit_amplification(tau, lam1, beta0, beta1, kt2)
            except ValueError:
                return False, math.inf
            return r < 1.0, r
        chk = check_explicit(tau, lam_vec + beta0, beta1, kt2)
        return bool(chk.verdict), float(chk.margin)

    def mc_numeric(index: int, beta1: float, beta0: float) -> tuple[bool, float]:
        assert isinstance(classifier, MonteCarloClassifier)
        spec = replace(template, beta0=beta0, beta1=beta1)
        n_steps = max(1, int(round(classifier.horizon / tau)))
        try:
            sys = assemble(spec, tensor=tensor, alpha=alpha)
            cfg = EnsembleConfig(
                paths=classifier.paths, base_seed=cell_seed(classifier.seed, index),
                tau=tau, n_steps=n_steps, scheme=scheme,
            )
            curve = mean_square_curve(sys, cfg, start)
            return classify_decay(curve, classifier.threshold, classifier.window)
        except (AllPathsDivergedError, ValueError) as exc:
            logger.debug("cella %d instabile: %s", index, exc)
            return False, math.inf

    def run_cell(item: tuple[int, tuple[int, int]]) -> RegionCell:
        index, (i1, i0) = item
        beta1, beta0 = b1[i1], b0[i0]
        analytic = check_exact(lam1, beta0, beta1, k).verdict is True
        if isinstance(classifier, MonteCarloClassifier):
            numeric, metric = mc_numeric(index, beta1, beta0)
        else:
            numeric, metric = analytic_numeric(beta1, beta0)
        return RegionCell(
            beta1=beta1, beta0=beta0, analytic_stable=analytic,
            numeric_stable=numeric, metric=metric,
        )

    out = list(run_ordered(run_cell, list(enumerate(cells)), threads))
    n_an = sum(c.analytic_stable for c in out)
    n_nu = sum(c.numeric_stable for c in out)
    logger.info("celle stabili: analitiche %d, numeriche %d su %d", n_an, n_nu, len(out))
    return RegionGrid(
        beta1_axis=b1,
        beta0_axis=b0,
        cells=out,
        classifier="monte_carlo" if isinstance(classifier, MonteCarloClassifier) else "analytic",
        scheme=str(scheme),
        tau=tau,
        lambda1=lam1,
        kappa=k if math.isfinite(k) else None,
    )


def boundary_beta0(beta1: float, kappa: float, lambda1: float) -> float:
    """@brief Frontiera analitica β0 = β1²κ/2 − λ1."""
    return 0.5 * beta1 * beta1 * kappa - lambda1


def ci_covers(curve: MeanSquareCurve, truth: Sequence[float]) -> float:
    """@brief Frazione di passi (n >= 1) in cui l'IC contiene il valore vero."""
    lo = np.asarray(curve.ci_low())
    hi = np.asarray(curve.ci_high())
    t = np.asarray(truth, dtype=float)
    ok = (lo[1:] <= t[1:]) & (t[1:] <= hi[1:])
    return float(np.mean(ok))

