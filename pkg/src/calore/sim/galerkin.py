"""
@file galerkin.py
@brief Sistema di SDE doppiamente troncato (N modi di soluzione, M di rumore)
       e utilità nello spazio dei coefficienti.
@ingroup sim_module

@details
dU = −(Λ^N + B^N) U dt + β1 Σ_{j<=M} A_j^N U dB_j

Convenzione di segno: drift −(λ_k + β0)·u_k, quindi β0 > 0 stabilizza.
La matrice di smorzamento si chiama drift_diag per non confonderla con i moti
browniani B_j.
"""

from __future__ import annotations
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from calore.spectral.basis import (
    BasisSpec,
    TripleProductTensor,
    build_tensor,
    eigenfunction_matrix,
    eigenvalues,
)
from calore.spectral.covariance import AlphaMatrix, CovarianceModel, alpha_matrix
from calore.spectral.quadrature import composite_gauss_legendre

logger = logging.getLogger(__name__)

PROJECTION_NODES = 4096


@dataclass(frozen=True)
class SystemSpec:
    """
    @brief Parametri del sistema troncato.
    @details
    diffusion moltiplica λ_k nel drift (1 per l'equazione standard, ν/2 per
    la variante con ½νΔ).
    """
    n: int
    m: int
    beta0: float
    beta1: float
    covariance: CovarianceModel
    diffusion: float = 1.0
    basis: BasisSpec = field(init=False)

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ValueError(f"N e M devono essere >= 1, ricevuti N={self.n}, M={self.m}")
        if self.diffusion <= 0.0:
            raise ValueError(f"diffusion deve essere > 0, ricevuto {self.diffusion}")
        object.__setattr__(self, "basis", BasisSpec(n_max=max(self.n, self.m)))


@dataclass(frozen=True, eq=False)
class StateVector:
    """@brief Coefficienti (u_1, …, u_N) nella base seno."""
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.coefficients, dtype=float).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "coefficients", arr)

    @property
    def n(self) -> int:
        return self.coefficients.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StateVector):
            return NotImplemented
        return bool(np.array_equal(self.coefficients, other.coefficients))


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    """
    @brief Sistema assemblato.
    @details
    drift_diag[k-1] = diffusion·λ_k + β0; noise_mats[j-1][k-1][i-1] = a_jki.
    """
    drift_diag: np.ndarray
    noise_mats: np.ndarray
    alpha: AlphaMatrix
    spec: SystemSpec

    @property
    def n(self) -> int:
        return self.drift_diag.shape[0]

    @property
    def m(self) -> int:
        return self.noise_mats.shape[0]

    @cached_property
    def noise_operator(self) -> np.ndarray:
        """
        @brief Matrice S (N, M·N) con (U @ S)[p, j·N + k] = (A_j u_p)_k.
        @details Permette di applicare tutti gli A_j a un blocco di stati con un solo prodotto.
        """
        n, m = self.n, self.m
        s = np.ascontiguousarray(self.noise_mats.transpose(2, 0, 1).reshape(n, m * n))
        s.setflags(write=False)
        return s

    def with_drift(self, drift_diag: Sequence[float] | np.ndarray) -> GalerkinSystem:
        """@brief Copia con drift iniettato (es. drift nullo nei test)."""
        d = np.array(drift_diag, dtype=float).reshape(-1)
        if d.shape[0] != self.n:
            raise ValueError(f"drift di lunghezza {d.shape[0]} != N={self.n}")
        d.setflags(write=False)
        return replace(self, drift_diag=d)


def assemble(
    spec: SystemSpec,
    *,
    tensor: TripleProductTensor | None = None,
    alpha: AlphaMatrix | None = None,
) -> GalerkinSystem:
    """
    @brief Assembla drift diagonale, matrici A_j^N e α per lo spec dato.
    @param spec Parametri del sistema.
    @param tensor Tensore già assemblato che copre (N, M) (opzionale, per riuso).
    @param alpha α già calcolata di dimensione >= M (opzionale, per riuso).
    @return GalerkinSystem immutabile.

    @note β1 non entra nell'assemblaggio: viene applicato nel passo temporale.
    """
    if tensor is None:
        tensor = build_tensor(spec.n, spec.m)
    if tensor.n_solution < spec.n or tensor.n_noise < spec.m:
        raise ValueError("tensore troppo piccolo per lo spec")
    if alpha is None:
        alpha = alpha_matrix(spec.covariance, spec.m)
    elif alpha.m > spec.m:
        alpha = alpha.leading(spec.m)
    elif alpha.m < spec.m:
        raise ValueError(f"α di dimensione {alpha.m} < M={spec.m}")

    drift = spec.diffusion * eigenvalues(spec.n) + spec.beta0
    drift.setflags(write=False)
    mats = np.ascontiguousarray(np.asarray(tensor.dense)[: spec.m, : spec.n, : spec.n])
    mats.setflags(write=False)
    logger.debug("sistema assemblato: N=%d M=%d β0=%g", spec.n, spec.m, spec.beta0)
    return GalerkinSystem(drift_diag=drift, noise_mats=mats, alpha=alpha, spec=spec)


def poly_x_1mx(x: np.ndarray) -> np.ndarray:
    """@brief Dato iniziale u0(x) = x(1−x)."""
    return x * (1.0 - x)


def project_initial(
    u0: Callable[[np.ndarray], np.ndarray] | Sequence[float] | np.ndarray,
    n: int,
    nodes: int = PROJECTION_NODES,
) -> StateVector:
    """
    @brief Proiezione P_N u0.
    @param u0 Funzione vettorizzata su [0,1] oppure lista di coefficienti.
    @param n Numero di modi N.
    @param nodes Nodi di quadratura (default 4096, fissi).
    @return StateVector con u_k = ∫ u0 e_k (funzione) o lista troncata/estesa con zeri.
    """
    if n < 1:
        raise ValueError(f"N deve essere >= 1, ricevuto {n}")
    if callable(u0):
        xs, ws = composite_gauss_legendre(nodes)
        vals = np.asarray(u0(xs), dtype=float)
        coeffs = eigenfunction_matrix(n, xs).T @ (ws * vals)
        return StateVector(coeffs)
    given = np.asarray(u0, dtype=float).reshape(-1)
    out = np.zeros(n)
    k = min(n, given.shape[0])
    out[:k] = given[:k]
    return StateVector(out)


def reconstruct(state: StateVector, xs: Sequence[float] | np.ndarray) -> np.ndarray:
    """
    @brief u(x) = Σ_k u_k √2 sin(kπx) nei punti xs.
    @throws ValueError Se un punto è fuori da [0,1].
    """
    e = eigenfunction_matrix(state.n, np.asarray(xs, dtype=float))
    return e @ state.coefficients


def l2_norm_sq(state: StateVector) -> float:
    """@brief ‖U‖₂² = Σ u_k² (uguale a ∫ u² per Parseval)."""
    c = state.coefficients
    return float(c @ c)


def embed(coefficients: np.ndarray, n: int) -> np.ndarray:
    """@brief Estensione con zeri a n coefficienti (ultimo asse)."""
    c = np.asarray(coefficients, dtype=float)
    if c.shape[-1] > n:
        raise ValueError(f"impossibile immergere {c.shape[-1]} coefficienti in {n}")
    pad = [(0, 0)] * (c.ndim - 1) + [(0, n - c.shape[-1])]
    return np.pad(c, pad)
