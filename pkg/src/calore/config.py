"""
@file config.py
@brief Configurazione degli esperimenti (TOML → RunConfig) e impostazioni di processo.
@ingroup config_module

@details
Un esperimento è un file TOML con sezioni system, noise, time, mc, output e,
a seconda del comando, region, convergence, compare.
Le opzioni --set a.b=valore sovrascrivono il dizionario grezzo prima della
validazione; il valore è interpretato come scalare TOML, altrimenti stringa.

Le variabili d'ambiente CALORE_OUTPUT_DIR, CALORE_THREADS e CALORE_LOG_LEVEL
sono lette da CaloreSettings.
"""

from __future__ import annotations
import math
import os
import tomllib
from pathlib import Path
from typing import Any, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from calore.errors import ConfigError
from calore.sim.galerkin import StateVector, SystemSpec, poly_x_1mx, project_initial
from calore.sim.integrators import StepScheme
from calore.spectral.covariance import CovarianceModel, DiagonalSpectral, KernelQuadrature


class CaloreSettings(BaseSettings):
    """@brief Impostazioni di processo lette dall'ambiente (prefisso CALORE_)."""
    model_config = SettingsConfigDict(env_prefix="CALORE_")

    output_dir: Optional[str] = None
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    log_level: str = "INFO"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PhysicalParams(_Section):
    """@brief Equazione con ½νΔ e rumore √λ: diffusion = ν/2, β0 = 0, β1 = √λ."""
    nu: float = Field(gt=0.0)
    lam: float = Field(gt=0.0)


class SystemSection(_Section):
    n: int = Field(ge=1)
    m: int = Field(ge=1)
    beta0: float = 0.0
    beta1: float = 1.0
    diffusion: float = Field(default=1.0, gt=0.0)
    initial: str | List[float] = "poly-x-1mx"
    physical: Optional[PhysicalParams] = None

    @model_validator(mode="after")
    def _check_initial(self) -> SystemSection:
        if isinstance(self.initial, str):
            if self.initial != "poly-x-1mx" and _mode_index(self.initial) is None:
                raise ValueError(
                    f"initial deve essere 'poly-x-1mx', 'mode-<k>' o una lista di coefficienti: {self.initial!r}"
                )
        elif not self.initial:
            raise ValueError("lista di coefficienti iniziali vuota")
        return self

    def effective(self) -> tuple[float, float, float]:
        """@brief (diffusion, β0, β1) dopo l'eventuale mappatura fisica (½νΔ, rumore √λ)."""
        if self.physical is None:
            return self.diffusion, self.beta0, self.beta1
        return 0.5 * self.physical.nu, 0.0, math.sqrt(self.physical.lam)


def _mode_index(name: str) -> int | None:
    if not name.startswith("mode-"):
        return None
    tail = name[len("mode-"):]
    return int(tail) if tail.isdigit() and int(tail) >= 1 else None


class NoiseSection(_Section):
    model: Literal["power-law", "fbm-field", "fractional-gaussian"]
    exponent: Optional[float] = None
    count: Optional[int] = None
    hurst: Optional[float] = None
    nodes: int = Field(default=256, ge=16)

    @model_validator(mode="after")
    def _check_params(self) -> NoiseSection:
        if self.model == "power-law":
            if self.exponent is None or self.count is None:
                raise ValueError("power-law richiede exponent e count")
            if self.exponent <= 1.0 or self.count < 1:
                raise ValueError("power-law richiede exponent > 1 e count >= 1")
        elif self.hurst is None or not 0.0 < self.hurst < 1.0:
            raise ValueError(f"{self.model} richiede hurst in (0,1)")
        return self

    def build(self) -> CovarianceModel:
        if self.model == "power-law":
            assert self.exponent is not None and self.count is not None
            return DiagonalSpectral.power_law(self.exponent, self.count)
        assert self.hurst is not None
        return KernelQuadrature(family=self.model, hurst=self.hurst, nodes=self.nodes)


class TimeSection(_Section):
    tau: float = Field(gt=0.0)
    steps: Optional[int] = Field(default=None, ge=1)
    horizon: Optional[float] = Field(default=None, gt=0.0)
    scheme: StepScheme = StepScheme.IMPLICIT_EULER

    @model_validator(mode="after")
    def _one_of(self) -> TimeSection:
        if (self.steps is None) == (self.horizon is None):
            raise ValueError("indicare esattamente uno tra time.steps e time.horizon")
        return self

    @property
    def n_steps(self) -> int:
        if self.steps is not None:
            return self.steps
        assert self.horizon is not None
        return max(1, int(round(self.horizon / self.tau)))


class McSection(_Section):
    paths: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)


class OutputSection(_Section):
    directory: str = "out"
    formats: List[Literal["csv", "json", "svg"]] = Field(default_factory=lambda: ["csv", "json"])
    log_y: bool = True
    trajectory: bool = False
    keep_states: bool = False


class RegionSection(_Section):
    beta1: tuple[float, float]
    beta0: tuple[float, float]
    beta1_count: int = Field(default=64, ge=1)
    beta0_count: int = Field(default=64, ge=1)
    classifier: Literal["analytic", "monte_carlo"] = "analytic"
    paths: int = 400
    horizon: float = Field(default=5.0, gt=0.0)
    threshold: float = 0.0

    @model_validator(mode="after")
    def _check(self) -> RegionSection:
        if self.classifier == "monte_carlo" and self.paths < 100:
            raise ValueError("il classificatore monte_carlo richiede paths >= 100")
        for name, (lo, hi), count in (
            ("beta1", self.beta1, self.beta1_count),
            ("beta0", self.beta0, self.beta0_count),
        ):
            if count > 1 and not hi > lo:
                raise ValueError(f"region.{name}: serve min < max")
        return self


class ConvergenceSection(_Section):
    n_ref: int = Field(ge=2)
    m_ref: int = Field(ge=2)
    n_ladder: List[int] = Field(default_factory=list)
    m_ladder: List[int] = Field(default_factory=list)
    levels: List[tuple[int, int]] = Field(default_factory=list)
    horizon: Optional[float] = Field(default=None, gt=0.0)
    paths: Optional[int] = Field(default=None, ge=2)

    @model_validator(mode="after")
    def _check(self) -> ConvergenceSection:
        if not (self.n_ladder or self.m_ladder or self.levels):
            raise ValueError("convergence richiede almeno un livello")
        if self.n_ladder and self.n_ref < 2 * max(self.n_ladder):
            raise ValueError("n_ref deve essere >= 2·max(n_ladder)")
        if self.m_ladder and self.m_ref < 2 * max(self.m_ladder):
            raise ValueError("m_ref deve essere >= 2·max(m_ladder)")
        return self


class Variant(_Section):
    label: str
    scheme: Optional[StepScheme] = None
    overrides: dict[str, Any] = Field(default_factory=dict)


class CompareSection(_Section):
    variants: List[Variant] = Field(min_length=1)


class RunConfig(_Section):
    """@brief Configurazione completa di un esperimento."""
    system: SystemSection
    noise: NoiseSection
    time: TimeSection
    mc: McSection = Field(default_factory=McSection)
    output: OutputSection = Field(default_factory=OutputSection)
    region: Optional[RegionSection] = None
    convergence: Optional[ConvergenceSection] = None
    compare: Optional[CompareSection] = None

    def covariance(self) -> CovarianceModel:
        return self.noise.build()

    def system_spec(self) -> SystemSpec:
        diffusion, beta0, beta1 = self.system.effective()
        return SystemSpec(
            n=self.system.n, m=self.system.m, beta0=beta0, beta1=beta1,
            covariance=self.covariance(), diffusion=diffusion,
        )

    def initial_state(self, n: int | None = None) -> StateVector:
        n = n or self.system.n
        init = self.system.initial
        if isinstance(init, list):
            return project_initial(init, n)
        k = _mode_index(init)
        if k is not None:
            coeffs = [0.0] * max(n, k)
            coeffs[k - 1] = 1.0
            return project_initial(coeffs, n)
        return project_initial(poly_x_1mx, n)

    def physical(self) -> tuple[float, float] | None:
        ex = self.system.physical
        return None if ex is None else (ex.nu, ex.lam)


def parse_scalar(text: str) -> Any:
    """@brief Interpreta un valore come scalare/array TOML; altrimenti stringa."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict[str, Any], overrides: list[str] | dict[str, Any]) -> dict[str, Any]:
    """
    @brief Applica override a.b=valore sul dizionario grezzo (copia profonda dei rami toccati).
    @throws ConfigError Se un override non ha la forma chiave=valore.
    """
    items: list[tuple[str, Any]] = []
    if isinstance(overrides, dict):
        items = list(overrides.items())
    else:
        for ov in overrides:
            key, sep, value = ov.partition("=")
            if not sep or not key.strip():
                raise ConfigError([f"override non valido {ov!r}: atteso sezione.chiave=valore"])
            items.append((key.strip(), parse_scalar(value.strip())))

    out = dict(raw)
    for key, value in items:
        parts = key.split(".")
        node = out
        for part in parts[:-1]:
            child = node.get(part)
            child = dict(child) if isinstance(child, dict) else {}
            node[part] = child
            node = child
        node[parts[-1]] = value
    return out


def load_raw(path: str | Path) -> dict[str, Any]:
    """
    @brief Legge il TOML grezzo.
    @throws ConfigError File mancante o errore di sintassi (con riga/colonna).
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError([f"file di configurazione non trovato: {p}"]) from None
    except OSError as exc:
        raise ConfigError([f"impossibile leggere {p}: {exc}"]) from exc
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{p}: {exc}"]) from exc


def validate_config(raw: dict[str, Any]) -> RunConfig:
    """@throws ConfigError Con un messaggio per campo (percorso puntato: messaggio)."""
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = ".".join(str(x) for x in err["loc"]) or "<radice>"
            problems.append(f"{loc}: {err['msg']}")
        raise ConfigError(problems) from exc


def load_config(path: str | Path, overrides: list[str] | None = None) -> tuple[RunConfig, dict[str, Any]]:
    """
    @brief Carica, applica gli override e valida.
    @return (RunConfig, dizionario grezzo risolto); il secondo serve alle varianti.
    """
    raw = apply_overrides(load_raw(path), overrides or [])
    return validate_config(raw), raw
