"""
@file montecarlo.py
@brief Stima Monte Carlo di E‖U_n‖₂² con intervalli di confidenza e fit del
       tasso di decadimento esponenziale.
@ingroup sim_module

@details
Le traiettorie sono divise in blocchi di dimensione fissa (CHUNK_SIZE), eseguiti
su un pool di thread. La riduzione avviene in ordine di blocco, quindi il
risultato non dipende dal numero di thread.
Le traiettorie divergenti sono escluse dalla media e contate a parte.
"""

from __future__ import annotations
import logging
import math
from collections.abc import Iterable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from calore.domain.models import DecayFit, MeanSquareCurve
from calore.errors import AllPathsDivergedError
from .galerkin import GalerkinSystem, StateVector
from .integrators import StepScheme, integrate_batch
from .noise import generate_batch

logger = logging.getLogger(__name__)

CHUNK_SIZE = 64
CONFIDENCE = 0.95


@dataclass(frozen=True)
class EnsembleConfig:
    """@brief Parametri di un ensemble: stime deterministiche dati (config, sistema)."""
    paths: int
    base_seed: int
    tau: float
    n_steps: int
    scheme: StepScheme = StepScheme.IMPLICIT_EULER
    threads: int = 1

    def __post_init__(self) -> None:
        if self.paths < 1:
            raise ValueError(f"paths deve essere >= 1, ricevuto {self.paths}")
        if self.n_steps < 1 or not self.tau > 0.0:
            raise ValueError("servono n_steps >= 1 e tau > 0")
        object.__setattr__(self, "scheme", StepScheme(self.scheme))


def path_chunks(paths: int, chunk_size: int = CHUNK_SIZE) -> list[range]:
    """@brief Partizione fissa degli indici di traiettoria in blocchi."""
    return [range(s, min(s + chunk_size, paths)) for s in range(0, paths, chunk_size)]


def run_ordered(func, items: Sequence, threads: int) -> Iterator:
    """@brief map su pool di thread; i risultati tornano nell'ordine degli input."""
    if threads <= 1 or len(items) <= 1:
        yield from (func(it) for it in items)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(func, items)


@dataclass
class Moments:
    """@brief Media e somma dei quadrati degli scarti per passo, combinabili in ordine fisso."""
    count: int
    mean: np.ndarray
    m2: np.ndarray
    diverged: int

    def merge(self, other: Moments) -> Moments:
        # combinazione a coppie (Chan et al.), ordine fisso
        if other.count == 0:
            return Moments(self.count, self.mean, self.m2, self.diverged + other.diverged)
        if self.count == 0:
            return Moments(other.count, other.mean, other.m2, self.diverged + other.diverged)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        return Moments(n, mean, m2, self.diverged + other.diverged)

    def halfwidth(self, confidence: float = CONFIDENCE) -> np.ndarray:
        """@brief Semiampiezza IC (approssimazione normale); zero con meno di due campioni."""
        if self.count < 2:
            return np.zeros_like(self.mean)
        var = np.maximum(self.m2 / (self.count - 1), 0.0)
        z = float(stats.norm.ppf(0.5 + confidence / 2))
        return z * np.sqrt(var / self.count)


def chunk_moments(norms: np.ndarray, diverged: np.ndarray) -> Moments:
    ok = norms[~diverged]
    k = ok.shape[0]
    if k == 0:
        z = np.zeros(norms.shape[1])
        return Moments(0, z, z.copy(), int(diverged.sum()))
    # scarti dal primo campione: campioni identici danno m2 = 0 esatto
    dev = ok - ok[0]
    shift = dev.mean(axis=0)
    mean = ok[0] + shift
    m2 = ((dev - shift) ** 2).sum(axis=0)
    return Moments(k, mean, m2, int(diverged.sum()))


def _curve_from_moments(mom: Moments, times: np.ndarray, paths: int) -> MeanSquareCurve:
    if mom.count == 0:
        raise AllPathsDivergedError(f"tutte le {paths} traiettorie sono divergenti")
    if mom.count == 1:
        logger.warning("una sola traiettoria valida: intervallo di confidenza nullo")
    half = mom.halfwidth()
    if mom.diverged:
        logger.warning("%d traiettorie divergenti su %d escluse dalla media", mom.diverged, paths)
    return MeanSquareCurve(
        t=times.tolist(),
        mean_sq=np.maximum(mom.mean, 0.0).tolist(),
        ci_halfwidth=half.tolist(),
        paths=paths,
        diverged_count=mom.diverged,
    )


def mean_square_curve(sys: GalerkinSystem, cfg: EnsembleConfig, u0: StateVector) -> MeanSquareCurve:
    """
    @brief Curva E‖U_n‖₂² stimata su P traiettorie indipendenti.
    @param sys Sistema assemblato.
    @param cfg Parametri dell'ensemble (seed, passo, schema, thread).
    @param u0 Stato iniziale.
    @return MeanSquareCurve con IC al 95% (approssimazione normale).
    @throws AllPathsDivergedError Se nessuna traiettoria resta finita.
    """
    chol = sys.alpha.chol

    def run_chunk(idx: range) -> Moments:
        inc = generate_batch(chol, sys.m, cfg.tau, cfg.n_steps, cfg.base_seed, idx)
        res = integrate_batch(sys, cfg.scheme, u0, inc, cfg.tau)
        logger.debug("blocco %d-%d completato", idx.start, idx.stop - 1)
        return chunk_moments(res.norm_sq, res.diverged)

    zero = np.zeros(cfg.n_steps + 1)
    total = Moments(0, zero, zero.copy(), 0)
    for mom in run_ordered(run_chunk, path_chunks(cfg.paths), cfg.threads):
        total = total.merge(mom)
    times = cfg.tau * np.arange(cfg.n_steps + 1)
    return _curve_from_moments(total, times, cfg.paths)


def _window(values: Sequence[float], window: float) -> slice:
    if not 0.0 < window <= 1.0:
        raise ValueError(f"window deve stare in (0,1], ricevuto {window}")
    n = len(values)
    start = n - max(1, math.ceil(window * n))
    return slice(start, n)


def decay_rate_fit(curve: MeanSquareCurve, window: float = 0.5) -> DecayFit:
    """
    @brief Pendenza ai minimi quadrati di log m̂_n contro t_n sulla coda.
    @param window Frazione finale della curva usata nel fit.
    @return DecayFit (rate, stderr).
    @throws ValueError Se la finestra ha < 10 punti o valori non positivi.
    """
    sl = _window(curve.t, window)
    t = np.asarray(curve.t[sl], dtype=float)
    m = np.asarray(curve.mean_sq[sl], dtype=float)
    if t.shape[0] < 10:
        raise ValueError(f"finestra di fit con {t.shape[0]} punti (servono almeno 10)")
    if np.any(~np.isfinite(m)) or np.any(m <= 0.0):
        raise ValueError("valori non positivi nella finestra: sospetta divergenza delle traiettorie")
    res = stats.linregress(t, np.log(m))
    return DecayFit(
        rate=float(res.slope),
        stderr=float(res.stderr),
        intercept=float(res.intercept),
        points=int(t.shape[0]),
        window=window,
    )


def stability_envelope(times: Iterable[float], rate_margin: float, norm0_sq: float) -> np.ndarray:
    """@brief Inviluppo e^{−margin·t}·‖u0‖², con margin = 2(λ1+β0) − β1²κ."""
    t = np.asarray(list(times), dtype=float)
    return norm0_sq * np.exp(-rate_margin * t)


def within_envelope(curve: MeanSquareCurve, envelope: np.ndarray, slack: float = 5.0) -> np.ndarray:
    """
    @brief Verifica puntuale m̂_n <= inviluppo·(1 + slack·ampiezza relativa IC).
    @return Array booleano per passo.
    """
    m = np.asarray(curve.mean_sq, dtype=float)
    half = np.asarray(curve.ci_halfwidth, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(m > 0.0, half / m, 0.0)
    return m <= envelope * (1.0 + slack * rel)
