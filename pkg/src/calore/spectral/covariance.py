"""
@file covariance.py
@brief Modelli di covarianza q(x,y), coefficienti α_ij, fattore di Cholesky e
       scalari di stabilità κ, κ̃2, ρ(M).
@ingroup spectral_module

@details
Due famiglie di modelli:
- DiagonalSpectral: q(x,y) = Σ q_j e_j(x) e_j(y), α diagonale esatta;
- KernelQuadrature: kernel esplicito (campo fBm, oppure gaussiano frazionario
  con κ = ∞) integrato con Gauss–Legendre tensoriale.

α_ij = ∫∫ q(x,y) e_i(x) e_j(y) dx dy.
κ = sup_ξ q(ξ,ξ).
κ̃2 = λ_max di G = Σ_{i,j<=M} α_ij (A_i^N)ᵀ A_j^N.
ρ(M) = norma spettrale del blocco di coda (α_ij)_{M<=i,j}.
"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from scipy import linalg, optimize

from calore.errors import ConvergenceFailure, FactorizationError, NotPositiveSemidefiniteError
from .basis import TripleProductTensor, build_tensor, eigenfunction_matrix
from .quadrature import gauss_legendre

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-8
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
REFINE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class DiagonalSpectral:
    """
    @brief Rumore diagonale nella base seno: α = diag(q_1, …, q_J).
    @details weights: pesi q_j >= 0 (lista finita, quindi sommabile).
    """
    weights: tuple[float, ...]
    label: str = "explicit"

    def __post_init__(self) -> None:
        if not self.weights:
            raise ValueError("DiagonalSpectral richiede almeno un peso")
        w = np.asarray(self.weights, dtype=float)
        if np.any(~np.isfinite(w)) or np.any(w < 0.0):
            raise ValueError(f"pesi q_j devono essere finiti e >= 0: {self.weights!r}")

    @classmethod
    def power_law(cls, exponent: float, count: int) -> DiagonalSpectral:
        """
        @brief Pesi q_j = j^(−p), j = 1..J.
        @param exponent p > 1.
        @param count J >= 1.
        """
        if exponent <= 1.0:
            raise ValueError(f"esponente power-law deve essere > 1, ricevuto {exponent}")
        if count < 1:
            raise ValueError(f"numero di modi deve essere >= 1, ricevuto {count}")
        js = np.arange(1, count + 1, dtype=float)
        weights = tuple(float(v) for v in js ** (-exponent))
        return cls(weights=weights, label=f"power-law({exponent:g},{count})")

    @property
    def is_diagonal(self) -> bool:
        return True

    def weight_vector(self, m: int) -> np.ndarray:
        """@brief (q_1, …, q_m) completato con zeri oltre J."""
        out = np.zeros(m)
        n = min(m, len(self.weights))
        out[:n] = self.weights[:n]
        return out

    def diagonal(self, xs: np.ndarray) -> np.ndarray:
        """@brief q(x,x) = Σ_j q_j·2 sin²(jπx)."""
        w = np.asarray(self.weights, dtype=float)
        e = eigenfunction_matrix(len(w), xs)
        return (e * e) @ w

    def sum_weights(self) -> float:
        return float(math.fsum(self.weights))


KernelFamily = Literal["fbm-field", "fractional-gaussian"]


@dataclass(frozen=True)
class KernelQuadrature:
    """
    @brief Kernel esplicito integrato per quadratura 2-D.
    @details
    - "fbm-field": q(x,y) = |x|^{2H} + |y|^{2H} − |x−y|^{2H}, κ finito;
    - "fractional-gaussian": q(x,y) = |x−y|^{2H−2}, κ = ∞ (costruibile, ma
      le condizioni di stabilità risultano non applicabili).
    """
    family: KernelFamily
    hurst: float
    nodes: int = 256
    refine: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.hurst < 1.0:
            raise ValueError(f"Hurst deve stare in (0,1), ricevuto {self.hurst}")
        if self.nodes < 16:
            raise ValueError(f"nodi di quadratura troppo pochi: {self.nodes}")

    @property
    def is_diagonal(self) -> bool:
        return False

    @property
    def label(self) -> str:
        return f"{self.family}(H={self.hurst:g})"

    def kernel(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        h2 = 2.0 * self.hurst
        if self.family == "fbm-field":
            return np.abs(x) ** h2 + np.abs(y) ** h2 - np.abs(x - y) ** h2
        with np.errstate(divide="ignore"):
            return np.abs(x - y) ** (h2 - 2.0)

    def diagonal(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.family == "fractional-gaussian":
            return np.full_like(xs, np.inf)
        return self.kernel(xs, xs)


CovarianceModel = DiagonalSpectral | KernelQuadrature


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """@brief L triangolare inferiore con LLᵀ = α + jitter·I."""
    lower: np.ndarray
    jitter: float


@dataclass(frozen=True, eq=False)
class AlphaMatrix:
    """
    @brief Matrice simmetrica M×M dei coefficienti α_ij.
    @details
    diagonal: True se il modello è diagonale (fuori diagonale zeri esatti).
    quadrature_delta: scarto massimo tra le due risoluzioni di quadratura (0 se esatta).
    """
    m: int
    entries: np.ndarray
    diagonal: bool
    quadrature_delta: float = 0.0
    source: str = field(default="", compare=False)

    @cached_property
    def chol(self) -> CholeskyFactor:
        return cholesky(self)

    def leading(self, m: int) -> AlphaMatrix:
        """@brief Blocco principale m×m."""
        if m > self.m:
            raise ValueError(f"blocco {m} oltre la dimensione di α ({self.m})")
        sub = np.array(self.entries[:m, :m])
        sub.setflags(write=False)
        return AlphaMatrix(m=m, entries=sub, diagonal=self.diagonal,
                           quadrature_delta=self.quadrature_delta, source=self.source)


def _kernel_alpha(model: KernelQuadrature, m: int, nodes: int) -> np.ndarray:
    xs, ws = gauss_legendre(nodes)
    e = eigenfunction_matrix(m, xs) * ws[:, None]
    q = model.kernel(xs[:, None], xs[None, :])
    return e.T @ q @ e


def alpha_matrix(model: CovarianceModel, m: int) -> AlphaMatrix:
    """
    @brief Coefficienti α_ij per 1 <= i,j <= M.
    @param model Modello di covarianza.
    @param m Troncamento del rumore M (>= 1).
    @return AlphaMatrix simmetrica.
    @throws NotPositiveSemidefiniteError Se la quadratura produce una matrice
            con autovalore minimo < −tol·λ_max.
    @throws ValueError Se il kernel è singolare sulla diagonale.
    """
    if m < 1:
        raise ValueError(f"M deve essere >= 1, ricevuto {m}")

    if isinstance(model, DiagonalSpectral):
        a = np.diag(model.weight_vector(m))
        a.setflags(write=False)
        return AlphaMatrix(m=m, entries=a, diagonal=True, source=model.label)

    if model.family == "fractional-gaussian":
        raise ValueError(
            "kernel gaussiano frazionario singolare sulla diagonale: α non calcolabile per quadratura"
        )

    a = _kernel_alpha(model, m, model.nodes)
    delta = 0.0
    if model.refine:
        fine = _kernel_alpha(model, m, 2 * model.nodes)
        delta = float(np.max(np.abs(fine - a)))
        a = fine
        if delta > REFINE_TOLERANCE:
            logger.warning(
                "quadratura α non convergente: scarto %.2e tra %d e %d nodi",
                delta, model.nodes, 2 * model.nodes,
            )
    a = 0.5 * (a + a.T)

    eig = linalg.eigvalsh(a)
    tol = PSD_TOLERANCE * max(float(eig[-1]), 0.0)
    if eig[0] < -tol:
        raise NotPositiveSemidefiniteError(float(eig[0]), tol)

    a.setflags(write=False)
    return AlphaMatrix(m=m, entries=a, diagonal=False, quadrature_delta=delta, source=model.label)


def cholesky(alpha: AlphaMatrix) -> CholeskyFactor:
    """
    @brief Fattore L con LLᵀ = α + jitter·I.
    @details
    Per α diagonale L = diag(√α_ii) senza jitter. Altrimenti si prova la
    scala di jitter {0, 1e-12, 1e-10, 1e-8} e si usa il primo valore che
    permette la fattorizzazione.
    @throws FactorizationError Con l'indice del minore principale che fallisce.
    """
    a = np.asarray(alpha.entries, dtype=float)
    if alpha.diagonal:
        low = np.diag(np.sqrt(np.diag(a)))
        low.setflags(write=False)
        return CholeskyFactor(lower=low, jitter=0.0)

    eye = np.eye(alpha.m)
    info = 0
    for jitter in JITTER_LADDER:
        c, info = linalg.lapack.dpotrf(a + jitter * eye, lower=1, clean=1)
        if info == 0:
            if jitter > 0.0:
                logger.warning("Cholesky di α con jitter %.0e", jitter)
            low = np.tril(c)
            low.setflags(write=False)
            return CholeskyFactor(lower=low, jitter=jitter)
    raise FactorizationError(minor=int(info), jitter=JITTER_LADDER[-1])


def kappa(model: CovarianceModel, grid_n: int = 10_000) -> float:
    """
    @brief κ = sup_ξ q(ξ,ξ) su una griglia uniforme in (0,1) più un
           raffinamento locale attorno all'argmax.
    @param grid_n Punti della griglia (>= 100).
    @return κ (inf per kernel singolari).
    """
    if grid_n < 100:
        raise ValueError(f"grid_n deve essere >= 100, ricevuto {grid_n}")
    xs = np.linspace(0.0, 1.0, grid_n + 2)[1:-1]
    diag = model.diagonal(xs)
    if not np.all(np.isfinite(diag)):
        return math.inf

    p = int(np.argmax(diag))
    best = float(diag[p])
    lo = float(xs[p - 1]) if p > 0 else 0.0
    hi = float(xs[p + 1]) if p + 1 < len(xs) else 1.0
    res = optimize.minimize_scalar(
        lambda x: -float(model.diagonal(np.array([x]))[0]),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    if res.success:
        best = max(best, -float(res.fun))
    return best


def gram_matrix(alpha: AlphaMatrix, tensor: TripleProductTensor, n: int, m: int) -> np.ndarray:
    """@brief G = Σ_{i,j<=M} α_ij (A_i^N)ᵀ A_j^N, matrice N×N simmetrica PSD."""
    if tensor.n_solution < n or tensor.n_noise < m:
        raise ValueError(
            f"tensore ({tensor.n_solution},{tensor.n_noise}) non copre (N={n}, M={m})"
        )
    if alpha.m < m:
        raise ValueError(f"α di dimensione {alpha.m} < M={m}")
    t = np.asarray(tensor.dense)[:m, :n, :n]
    a = np.asarray(alpha.entries)[:m, :m]
    # t[j, l, k] = a_{j l k}; x[i, l, m] = Σ_j α_ij t[j, l, m]
    x = np.tensordot(a, t, axes=([1], [0]))
    g = t.reshape(m * n, n).T @ x.reshape(m * n, n)
    return 0.5 * (g + g.T)


def _power_iteration(g: np.ndarray, rtol: float, max_iter: int) -> float:
    v = np.ones(g.shape[0]) / math.sqrt(g.shape[0])
    lam = 0.0
    for _ in range(max_iter):
        w = g @ v
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        new = float(v @ w)
        v = w / nrm
        if abs(new - lam) <= rtol * abs(new):
            return new
        lam = new
    raise ConvergenceFailure(f"power iteration non convergente dopo {max_iter} iterazioni")


def kappa_tilde2(
    alpha: AlphaMatrix,
    tensor: TripleProductTensor,
    n: int,
    m: int,
    *,
    method: Literal["eigh", "power"] = "eigh",
    max_iter: int = 10_000,
) -> float:
    """
    @brief κ̃2 = λ_max(G) con G la matrice di Gram del rumore proiettato.
    @param method "eigh" (solutore simmetrico) oppure "power" (iterazione delle potenze, rtol 1e-10).
    @throws ConvergenceFailure Se la power iteration supera max_iter.
    """
    g = gram_matrix(alpha, tensor, n, m)
    if not np.any(g):
        return 0.0
    if method == "power":
        return _power_iteration(g, 1e-10, max_iter)
    top = linalg.eigvalsh(g, subset_by_index=[n - 1, n - 1])
    return max(float(top[0]), 0.0)


def kappa_tilde1_approx(model: CovarianceModel, n: int, m: int) -> float:
    """@brief Approssimazione di κ̃1 come κ̃2(N, 4·max(N, M)) (limite M → ∞)."""
    m_large = 4 * max(n, m)
    alpha = alpha_matrix(model, m_large)
    return kappa_tilde2(alpha, build_tensor(n, m_large), n, m_large)


def rho(model: CovarianceModel, m: int, tail_cap: int | None = None) -> float:
    """
    @brief ρ(M) = norma spettrale del blocco (α_ij)_{M<=i,j<=tail_cap}.
    @details Per modelli diagonali vale esattamente max_{M<=j<=tail_cap} q_j.
    tail_cap di default: max(J, 4M) per i diagonali, 4M per i kernel.
    @throws ValueError Se tail_cap <= M.
    """
    if tail_cap is None:
        tail_cap = max(4 * m, m + 1)
        if isinstance(model, DiagonalSpectral):
            tail_cap = max(tail_cap, len(model.weights))
    if m < 1 or tail_cap <= m:
        raise ValueError(f"serve 1 <= M < tail_cap, ricevuti M={m}, tail_cap={tail_cap}")
    if isinstance(model, DiagonalSpectral):
        return float(np.max(model.weight_vector(tail_cap)[m - 1:]))
    a = alpha_matrix(model, tail_cap).entries[m - 1:, m - 1:]
    eig = linalg.eigvalsh(a)
    return float(max(abs(eig[0]), abs(eig[-1])))
