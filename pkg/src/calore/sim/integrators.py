"""
@file integrators.py
@brief Schemi a un passo (Euler implicito, esplicito, implicito-stiff) e
       integrazione di traiettorie.
@ingroup sim_module

@details
Il rumore è sempre esplicito. Le parti implicite richiedono solo un reciproco
diagonale, perché Λ^N + B^N è diagonale nella base seno: nessun solutore lineare.

- implicito:       u' = (u + v) / (1 + τ d)
- esplicito:       u' = (1 − τ d) u + v
- implicito-stiff: u' = ((1 − τβ0) u + v) / (1 + τ(d − β0))

con d = drift_diag e v = β1 Σ_j A_j u ΔB_j. β1 compare in tutti e tre gli schemi.
"""

from __future__ import annotations
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from calore.errors import NonFiniteStateError
from .galerkin import GalerkinSystem, StateVector
from .noise import NoiseIncrements

logger = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e100


class StepScheme(StrEnum):
    IMPLICIT_EULER = "implicit"
    EXPLICIT_EULER = "explicit"
    STIFF_IMPLICIT_EULER = "stiff-implicit"


@dataclass(frozen=True, eq=False)
class StepOperator:
    """
    @brief Coefficienti diagonali di un passo: u' = (mult·u + v) / div.
    """
    mult: np.ndarray
    div: np.ndarray
    beta1: float
    noise_operator: np.ndarray
    n: int
    m: int

    def apply(self, u: np.ndarray, db: np.ndarray) -> np.ndarray:
        """
        @brief Un passo su un blocco di stati.
        @param u Stati (P, N).
        @param db Incrementi (P, M).
        @return Nuovi stati (P, N).
        """
        p = u.shape[0]
        au = (u @ self.noise_operator).reshape(p, self.m, self.n)
        v = self.beta1 * np.einsum("pjk,pj->pk", au, db)
        return (self.mult * u + v) / self.div


def _implicit(sys: GalerkinSystem, tau: float) -> tuple[np.ndarray, np.ndarray]:
    return np.ones(sys.n), 1.0 + tau * sys.drift_diag


def _explicit(sys: GalerkinSystem, tau: float) -> tuple[np.ndarray, np.ndarray]:
    return 1.0 - tau * sys.drift_diag, np.ones(sys.n)


def _stiff_implicit(sys: GalerkinSystem, tau: float) -> tuple[np.ndarray, np.ndarray]:
    beta0 = sys.spec.beta0
    lam = sys.drift_diag - beta0
    return np.full(sys.n, 1.0 - tau * beta0), 1.0 + tau * lam


def get_scheme_registry() -> dict[StepScheme, Callable[[GalerkinSystem, float], tuple[np.ndarray, np.ndarray]]]:
    """
    Registry degli schemi disponibili: (mult, div) per sistema e passo.
    Aggiungi qui nuovi schemi senza cambiare il dispatcher.
    """
    return {
        StepScheme.IMPLICIT_EULER: _implicit,
        StepScheme.EXPLICIT_EULER: _explicit,
        StepScheme.STIFF_IMPLICIT_EULER: _stiff_implicit,
    }


def step_operator(sys: GalerkinSystem, scheme: StepScheme | str, tau: float) -> StepOperator:
    """
    @brief Precalcola i coefficienti di passo.
    @throws ValueError Se tau <= 0 o se il solve implicito è mal posto (1 + τ(...) <= 0).
    """
    if not tau > 0.0:
        raise ValueError(f"tau deve essere > 0, ricevuto {tau}")
    scheme = StepScheme(scheme)
    mult, div = get_scheme_registry()[scheme](sys, tau)
    if np.any(div <= 0.0):
        k = int(np.argmax(div <= 0.0)) + 1
        raise ValueError(
            f"solve implicito mal posto ({scheme}): 1 + τ(·) = {div[k - 1]:.3g} <= 0 al modo k={k}"
        )
    return StepOperator(
        mult=mult,
        div=div,
        beta1=float(sys.spec.beta1),
        noise_operator=sys.noise_operator,
        n=sys.n,
        m=sys.m,
    )


def step(
    sys: GalerkinSystem,
    scheme: StepScheme | str,
    u: StateVector,
    db: Sequence[float] | np.ndarray,
    tau: float,
) -> StateVector:
    """
    @brief Applica un passo dello schema scelto.
    @param u Stato corrente.
    @param db Colonna di incrementi (M valori).
    @param tau Passo temporale.
    @return Nuovo stato.
    """
    db = np.asarray(db, dtype=float).reshape(-1)
    if db.shape[0] != sys.m:
        raise ValueError(f"dB ha {db.shape[0]} componenti, attese M={sys.m}")
    if u.n != sys.n:
        raise ValueError(f"stato di dimensione {u.n} != N={sys.n}")
    op = step_operator(sys, scheme, tau)
    out = op.apply(u.coefficients[None, :], db[None, :])
    return StateVector(out[0])


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    @brief Serie temporale di una traiettoria.
    @details
    norm_sq ha lunghezza n_steps + 1; dopo una divergenza (norma² > 1e100) i
    valori restanti sono inf e diverged_at indica il passo.
    """
    times: np.ndarray
    norm_sq: np.ndarray
    states: np.ndarray | None = None
    diverged_at: int | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


def integrate(
    sys: GalerkinSystem,
    scheme: StepScheme | str,
    u0: StateVector,
    inc: NoiseIncrements,
    tau: float,
    keep_states: bool = False,
) -> Trajectory:
    """
    @brief Applica n_steps passi registrando ‖U_n‖₂² ad ogni passo.
    @param keep_states Se True conserva anche gli stati (n_steps+1, N).
    @return Trajectory deterministica dati gli input.
    @throws NonFiniteStateError Se uno stato diventa NaN/Inf.
    """
    if inc.n_steps < 1:
        raise ValueError("servono almeno un passo di incrementi")
    if inc.m != sys.m:
        raise ValueError(f"incrementi con M={inc.m} per un sistema con M={sys.m}")
    op = step_operator(sys, scheme, tau)
    n_steps = inc.n_steps
    times = tau * np.arange(n_steps + 1)
    norms = np.full(n_steps + 1, np.inf)
    states = np.zeros((n_steps + 1, sys.n)) if keep_states else None

    u = np.array(u0.coefficients)[None, :]
    norms[0] = float(u[0] @ u[0])
    if states is not None:
        states[0] = u[0]
    diverged_at = None
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            u = op.apply(u, inc.values[:, n][None, :])
            if not np.all(np.isfinite(u)):
                raise NonFiniteStateError(step=n + 1)
            ns = float(u[0] @ u[0])
            if states is not None:
                states[n + 1] = u[0]
            if ns > DIVERGENCE_THRESHOLD:
                diverged_at = n + 1
                logger.warning("traiettoria divergente al passo %d (‖U‖² = %.3e)", n + 1, ns)
                norms[n + 1] = ns
                break
            norms[n + 1] = ns
    return Trajectory(times=times, norm_sq=norms, states=states, diverged_at=diverged_at)


@dataclass(frozen=True, eq=False)
class BatchResult:
    """
    @brief Esito dell'integrazione di un blocco di traiettorie.
    @details
    norm_sq (P, n_steps+1) con NaN dopo la divergenza; diverged (P,) booleano;
    snapshots (len(keep_at), P, N) se richiesti.
    """
    norm_sq: np.ndarray
    diverged: np.ndarray
    snapshots: np.ndarray | None


def integrate_batch(
    sys: GalerkinSystem,
    scheme: StepScheme | str,
    u0: StateVector,
    increments: np.ndarray,
    tau: float,
    keep_at: Sequence[int] | None = None,
) -> BatchResult:
    """
    @brief Integra P traiettorie indipendenti in blocco.
    @param increments Array (n_steps, P, M) come da generate_batch.
    @param keep_at Indici di passo in cui salvare gli stati (0..n_steps).
    @return BatchResult; le traiettorie divergenti (norma² > 1e100 o non finite)
            vengono congelate a zero e marcate.
    """
    n_steps, p, m = increments.shape
    if m != sys.m:
        raise ValueError(f"incrementi con M={m} per un sistema con M={sys.m}")
    op = step_operator(sys, scheme, tau)
    keep = sorted(set(keep_at)) if keep_at is not None else []
    slot = {k: i for i, k in enumerate(keep)}
    snaps = np.zeros((len(keep), p, sys.n)) if keep else None

    u = np.tile(np.asarray(u0.coefficients, dtype=float), (p, 1))
    norms = np.empty((p, n_steps + 1))
    norms[:, 0] = np.einsum("pk,pk->p", u, u)
    diverged = np.zeros(p, dtype=bool)
    if snaps is not None and 0 in slot:
        snaps[slot[0]] = u

    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            u = op.apply(u, increments[n])
            ns = np.einsum("pk,pk->p", u, u)
            bad = ~np.isfinite(ns) | (ns > DIVERGENCE_THRESHOLD)
            if np.any(bad & ~diverged):
                diverged |= bad
                u[diverged] = 0.0
            ns[diverged] = np.nan
            norms[:, n + 1] = ns
            if snaps is not None and (n + 1) in slot:
                snaps[slot[n + 1]] = u
    return BatchResult(norm_sq=norms, diverged=diverged, snapshots=snaps)
