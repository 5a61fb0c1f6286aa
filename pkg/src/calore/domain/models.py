"""
@file models.py
@brief Modelli dominio (contratti JSON) tramite Pydantic.
@ingroup domain_module

@details
Definisce i contratti versionati prodotti dagli esperimenti.
Questi modelli fungono da:
- DTO tra layer (simulazione/analisi/storage/cli)
- schema implicito per serializzazione JSON
- base per validazione input/output

I valori non finiti (κ = ∞) vengono serializzati come null.
"""

from __future__ import annotations
from typing import Any, Literal, Optional, List

from pydantic import BaseModel, Field, model_validator

CONTRACT_VERSION = "1.0"


class DecayFit(BaseModel):
    """@brief Pendenza di log E‖U‖² contro t sulla coda della curva."""
    rate: float
    stderr: float
    intercept: float
    points: int
    window: float


class MeanSquareCurve(BaseModel):
    """
    @brief Stima Monte Carlo di E‖U_n‖₂².
    @details
    ci_halfwidth: semiampiezza IC 95% (approssimazione normale).
    diverged_count: traiettorie escluse dalla media perché divergenti.
    """
    t: List[float]
    mean_sq: List[float]
    ci_halfwidth: List[float]
    paths: int
    diverged_count: int = 0

    @model_validator(mode="after")
    def _check(self) -> MeanSquareCurve:
        if not len(self.t) == len(self.mean_sq) == len(self.ci_halfwidth):
            raise ValueError("t, mean_sq e ci_halfwidth devono avere la stessa lunghezza")
        if not all(v >= 0.0 for v in self.mean_sq) or not all(h >= 0.0 for h in self.ci_halfwidth):
            raise ValueError("mean_sq e ci_halfwidth devono essere >= 0 (NaN escluso)")
        return self

    def ci_low(self) -> List[float]:
        return [max(m - h, 0.0) for m, h in zip(self.mean_sq, self.ci_halfwidth, strict=True)]

    def ci_high(self) -> List[float]:
        return [m + h for m, h in zip(self.mean_sq, self.ci_halfwidth, strict=True)]


class Verdicts(BaseModel):
    """@brief Esito per condizione: None se la condizione non è applicabile."""
    exact: Optional[bool] = None
    spectral: Optional[bool] = None
    kappa_tilde1: Optional[bool] = None
    sum_q: Optional[bool] = None
    implicit: Optional[bool] = None
    explicit: Optional[bool] = None
    physical: Optional[bool] = None


class StabilityReport(BaseModel):
    """
    @brief Scalari di stabilità, margini delle condizioni e verdetti.
    @details
    Margini positivi indicano stabilità, tranne physical_margin
    (−νλ1 + λΣq_j, stabile se negativo).
    """
    contract_version: str = CONTRACT_VERSION
    n: int
    m: int
    beta0: float
    beta1: float
    tau: float
    scheme: str
    covariance: str
    lambda1: float
    kappa: Optional[float] = None
    kappa_applicable: bool = True
    kappa_tilde2: Optional[float] = None
    kappa_tilde1_approx: Optional[float] = None
    rho_at_m: Optional[float] = None
    sum_q: Optional[float] = None
    cond_exact: Optional[float] = None
    cond_spectral: Optional[float] = None
    cond_kappa_tilde1: Optional[float] = None
    cond_sum_q: Optional[float] = None
    implicit_ratio: Optional[float] = None
    explicit_lhs: Optional[float] = None
    physical_margin: Optional[float] = None
    cholesky_jitter: Optional[float] = None
    verdicts: Verdicts = Field(default_factory=Verdicts)
    warnings: List[str] = Field(default_factory=list)


class RegionCell(BaseModel):
    """@brief Cella (β1, β0) della griglia di stabilità."""
    beta1: float
    beta0: float
    analytic_stable: bool
    numeric_stable: bool
    metric: float


class RegionGrid(BaseModel):
    """
    @brief Griglia rettangolare di stabilità nel piano (β1, β0).
    @details Celle in ordine riga-maggiore: β0 esterno, β1 interno.
    """
    contract_version: str = CONTRACT_VERSION
    beta1_axis: List[float]
    beta0_axis: List[float]
    cells: List[RegionCell]
    classifier: Literal["analytic", "monte_carlo"]
    scheme: str
    tau: float
    lambda1: float
    kappa: Optional[float] = None

    @model_validator(mode="after")
    def _check(self) -> RegionGrid:
        for name, axis in (("beta1", self.beta1_axis), ("beta0", self.beta0_axis)):
            if not axis or any(b <= a for a, b in zip(axis, axis[1:])):
                raise ValueError(f"asse {name} vuoto o non strettamente crescente")
        if len(self.cells) != len(self.beta1_axis) * len(self.beta0_axis):
            raise ValueError("numero di celle incoerente con gli assi")
        return self

    def cell(self, i1: int, i0: int) -> RegionCell:
        """@brief Cella con β1 = beta1_axis[i1], β0 = beta0_axis[i0]."""
        return self.cells[i0 * len(self.beta1_axis) + i1]

    def stable_set(self, kind: Literal["analytic", "numeric"] = "numeric") -> set[tuple[int, int]]:
        """@brief Indici (i1, i0) delle celle stabili."""
        n1 = len(self.beta1_axis)
        out = set()
        for idx, c in enumerate(self.cells):
            flag = c.analytic_stable if kind == "analytic" else c.numeric_stable
            if flag:
                out.add((idx % n1, idx // n1))
        return out


class ConvergenceLevel(BaseModel):
    """
    @brief Errore forte a un livello (N, M).
    @details
    error: sup sui checkpoint di E‖Û_ref − Û_{N,M}‖²; error_t: lo stesso al tempo finale.
    trusted: False se l'errore non supera 10× il pavimento del riferimento.
    """
    ladder: Literal["N", "M", "custom"]
    n: int
    m: int
    lambda_n: float
    rho_m: float
    error: float = Field(ge=0.0)
    ci: float = Field(ge=0.0)
    error_t: float = Field(ge=0.0)
    trusted: bool = True


class ConvergenceReport(BaseModel):
    """@brief Studio di convergenza a rumore accoppiato con pendenze log-log."""
    contract_version: str = CONTRACT_VERSION
    n_ref: int
    m_ref: int
    tau: float
    horizon: float
    paths: int
    seed: int
    beta0: float
    beta1: float
    covariance: str
    floor: float
    levels: List[ConvergenceLevel]
    slope_n: Optional[float] = None
    slope_n_stderr: Optional[float] = None
    slope_m: Optional[float] = None
    slope_m_stderr: Optional[float] = None
    warnings: List[str] = Field(default_factory=list)


class VariantResult(BaseModel):
    """@brief Esito di una variante del confronto."""
    label: str
    overrides: dict[str, Any] = Field(default_factory=dict)
    decay: Optional[DecayFit] = None
    diverged_count: int = 0


class RunManifest(BaseModel):
    """
    @brief Manifest di esecuzione: parametri risolti, seed e versione.
    @details È sufficiente a ripetere l'esecuzione bit a bit.
    """
    contract_version: str = CONTRACT_VERSION
    command: str
    software_version: str
    created_at: str
    seed: Optional[int] = None
    threads: int = 1
    config: dict[str, Any]
    resolved: dict[str, Any] = Field(default_factory=dict)
    cholesky_jitter: Optional[float] = None
    artifacts: List[str] = Field(default_factory=list)
    decay: Optional[DecayFit] = None
    variants: List[VariantResult] = Field(default_factory=list)
