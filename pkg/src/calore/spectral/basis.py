"""
@file basis.py
@brief Autocoppie di −Δ su [0,1] (Dirichlet) e tensore dei prodotti tripli a_jki.
@ingroup spectral_module

@details
Base: e_k(x) = √2 sin(kπx), λ_k = k²π². La normalizzazione √2 è l'unica
ortonormale su [0,1].

Il tensore a_jki = ∫₀¹ e_i e_j e_k dx accoppia i modi del rumore (j) ai modi
della soluzione (k, i). È simmetrico per permutazioni ed è nullo quando i+j+k
è pari. Viene memorizzato in forma sparsa, con chiave la terna ordinata.
"""

from __future__ import annotations
import logging
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .quadrature import composite_gauss_legendre

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class BasisSpec:
    """
    @brief Descrizione della base spettrale.
    @details Dimensione 1, dominio [0,1], bordo Dirichlet: fissati.
    n_max è il massimo indice di modo richiesto dal sistema.
    """
    n_max: int
    dimension: int = 1
    domain: tuple[float, float] = (0.0, 1.0)
    boundary: str = "dirichlet"

    def __post_init__(self) -> None:
        _check_index(self.n_max, "n_max")


def _check_index(k: int, name: str = "k") -> int:
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise ValueError(f"{name} deve essere un intero >= 1, ricevuto {k!r}")
    return int(k)


def _check_x(x: float | np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"x fuori da [0,1]: {x!r}")
    return arr


def eigenvalue(k: int) -> float:
    """
    @brief Autovalore λ_k = k²π² di −Δ con bordo Dirichlet.
    @param k Indice del modo (>= 1).
    @return k²π².
    @throws ValueError Se k < 1.
    """
    k = _check_index(k)
    return float(k * k) * math.pi**2


def eigenvalues(n: int) -> np.ndarray:
    """@brief Vettore (λ_1, …, λ_n)."""
    n = _check_index(n, "n")
    ks = np.arange(1, n + 1, dtype=float)
    return ks * ks * math.pi**2


def eval_eigenfunction(k: int, x: float) -> float:
    """
    @brief Valuta e_k(x) = √2 sin(kπx).
    @param k Indice del modo (>= 1).
    @param x Punto in [0,1].
    @return Valore reale.
    @throws ValueError Se x è fuori da [0,1] o k < 1.
    """
    k = _check_index(k)
    xv = float(_check_x(x))
    return SQRT2 * math.sin(k * math.pi * xv)


def eigenfunction_matrix(n: int, xs: np.ndarray) -> np.ndarray:
    """
    @brief Matrice E[p, k-1] = e_k(xs[p]) per k = 1..n.
    @param n Numero di modi.
    @param xs Punti in [0,1].
    @return Array (len(xs), n).
    """
    n = _check_index(n, "n")
    xv = _check_x(xs).reshape(-1)
    ks = np.arange(1, n + 1, dtype=float)
    return SQRT2 * np.sin(np.pi * np.outer(xv, ks))


def _closed_form(i: np.ndarray, j: np.ndarray, k: np.ndarray) -> np.ndarray:
    # terna ordinata a <= b <= c: c fa da "k" nella formula, denominatori > 0
    triple = np.sort(np.stack(np.broadcast_arrays(i, j, k)).astype(np.int64), axis=0)
    a, b, c = (triple[0].astype(float), triple[1].astype(float), triple[2].astype(float))
    odd = (triple.sum(axis=0) % 2) == 1
    d1 = np.where(odd, c * c - (a - b) ** 2, 1.0)
    d2 = np.where(odd, c * c - (a + b) ** 2, 1.0)
    val = (2.0 * SQRT2 * c / math.pi) * (1.0 / d1 - 1.0 / d2)
    return np.where(odd, val, 0.0)


def triple_product(i: int, j: int, k: int) -> float:
    """
    @brief a_jki = ∫₀¹ e_i e_j e_k dx in forma chiusa.
    @param i Indice (>= 1).
    @param j Indice (>= 1).
    @param k Indice (>= 1).
    @return 0 se i+j+k è pari, altrimenti (2√2 k/π)[1/(k²−(i−j)²) − 1/(k²−(i+j)²)].

    @note Gli indici vengono ordinati prima del calcolo: il risultato è
    identico bit a bit per ogni permutazione.
    """
    i, j, k = _check_index(i, "i"), _check_index(j, "j"), _check_index(k, "k")
    return float(_closed_form(np.asarray(i), np.asarray(j), np.asarray(k)))


def triple_product_quadrature(i: int, j: int, k: int, nodes: int = 10_000) -> float:
    """
    @brief Oracolo indipendente per a_jki via Gauss–Legendre composta.
    @param nodes Numero di nodi (>= 100).
    @return Stima di ∫₀¹ e_i e_j e_k dx.
    """
    i, j, k = _check_index(i, "i"), _check_index(j, "j"), _check_index(k, "k")
    if nodes < 100:
        raise ValueError(f"nodes deve essere >= 100, ricevuto {nodes}")
    xs, ws = composite_gauss_legendre(nodes)
    f = (
        SQRT2 * np.sin(i * np.pi * xs)
        * SQRT2 * np.sin(j * np.pi * xs)
        * SQRT2 * np.sin(k * np.pi * xs)
    )
    return float(np.dot(ws, f))


@dataclass(frozen=True, eq=False)
class TripleProductTensor:
    """
    @brief Tensore sparso a_jki per 1 <= k,i <= N e 1 <= j <= M.
    @details
    entries: valori non nulli con chiave la terna ordinata crescente; la
    simmetria viene applicata in lettura.
    """
    n_solution: int
    n_noise: int
    entries: Mapping[tuple[int, int, int], float]

    def _in_range(self, j: int, k: int, i: int) -> bool:
        return 1 <= j <= self.n_noise and 1 <= k <= self.n_solution and 1 <= i <= self.n_solution

    def value(self, j: int, k: int, i: int) -> float:
        """@brief a_jki; ValueError se la terna è fuori dal range del tensore."""
        if not self._in_range(j, k, i):
            raise ValueError(
                f"indice fuori range (j={j}, k={k}, i={i}) per N={self.n_solution}, M={self.n_noise}"
            )
        a, b, c = sorted((j, k, i))
        return self.entries.get((a, b, c), 0.0)

    def iter_entries(self) -> Iterator[tuple[int, int, int, float]]:
        """@brief Voci non nulle (j, k, i, valore) in ordine lessicografico."""
        for j in range(1, self.n_noise + 1):
            for k in range(1, self.n_solution + 1):
                start = 1 if (j + k) % 2 == 0 else 2
                for i in range(start, self.n_solution + 1, 2):
                    yield j, k, i, self.value(j, k, i)

    def nnz(self) -> int:
        """@brief Numero di terne ordinate (j,k,i) non nulle nel range."""
        n, m = self.n_solution, self.n_noise
        odd_n, even_n = (n + 1) // 2, n // 2
        odd_m, even_m = (m + 1) // 2, m // 2
        # (k,i) con somma pari / dispari
        same = odd_n * odd_n + even_n * even_n
        mixed = 2 * odd_n * even_n
        return odd_m * same + even_m * mixed

    @cached_property
    def dense(self) -> np.ndarray:
        """@brief Array (M, N, N) con dense[j-1, k-1, i-1] = a_jki (sola lettura)."""
        j = np.arange(1, self.n_noise + 1)[:, None, None]
        k = np.arange(1, self.n_solution + 1)[None, :, None]
        i = np.arange(1, self.n_solution + 1)[None, None, :]
        arr = _closed_form(i, j, k)
        arr.setflags(write=False)
        return arr


def build_tensor(n: int, m: int) -> TripleProductTensor:
    """
    @brief Assembla il tensore a_jki per 1 <= k,i <= n e 1 <= j <= m.
    @param n Troncamento della soluzione N (>= 1).
    @param m Troncamento del rumore M (>= 1).
    @return TripleProductTensor con le sole voci a parità dispari.
    @throws ValueError Se n o m < 1.
    """
    n = _check_index(n, "N")
    m = _check_index(m, "M")
    top = max(n, m)
    # terne ordinate a <= b <= c con a,b,c <= top e somma dispari
    a, b, c = np.meshgrid(
        np.arange(1, top + 1), np.arange(1, top + 1), np.arange(1, top + 1), indexing="ij"
    )
    keep = (a <= b) & (b <= c) & ((a + b + c) % 2 == 1)
    # almeno un indice deve stare in j <= m e gli altri due in k,i <= n
    keep &= (a <= m) & (c <= n) | (a <= n) & (b <= n) & (c <= m) | (a <= n) & (b <= m) & (c <= n)
    a, b, c = a[keep], b[keep], c[keep]
    vals = _closed_form(a, b, c)
    entries = {
        (int(x), int(y), int(z)): float(v) for x, y, z, v in zip(a, b, c, vals, strict=True)
    }
    logger.debug("tensore a_jki: N=%d M=%d voci uniche=%d", n, m, len(entries))
    return TripleProductTensor(n_solution=n, n_noise=m, entries=entries)
