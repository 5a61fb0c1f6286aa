"""
@file noise.py
@brief Incrementi browniani correlati ΔB_j^n riproducibili e loro restrizione.
@ingroup sim_module

@details
Ogni modo j di ogni traiettoria ha il proprio flusso Philox, con chiave
(base_seed, path_index, j). Troncare i modi quindi non sposta le estrazioni
dei modi rimanenti: è ciò che rende esatta restrict_increments.

Colonna n: √τ · L_{1..M,1..M} · ξ_n, con ξ_n normale standard.
"""

from __future__ import annotations
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np

from calore.spectral.covariance import CholeskyFactor


@dataclass(frozen=True)
class NoisePathConfig:
    """@brief Parametri che identificano una traiettoria di rumore."""
    m: int
    tau: float
    n_steps: int
    base_seed: int
    path_index: int = 0

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"m deve essere >= 1, ricevuto {self.m}")
        if not (self.tau > 0.0 and math.isfinite(self.tau)):
            raise ValueError(f"tau deve essere > 0, ricevuto {self.tau}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps deve essere >= 1, ricevuto {self.n_steps}")
        if self.base_seed < 0 or self.path_index < 0:
            raise ValueError("base_seed e path_index devono essere >= 0")


@dataclass(frozen=True, eq=False)
class NoiseIncrements:
    """
    @brief Matrice M × n_steps di incrementi, con la provenienza.
    @details diagonal: True se generata da un fattore diagonale (restrizione ammessa).
    """
    values: np.ndarray
    config: NoisePathConfig
    diagonal: bool

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    def column(self, n: int) -> np.ndarray:
        return self.values[:, n]


def mode_stream(base_seed: int, path_index: int, mode: int) -> np.random.Generator:
    """@brief Generatore Philox dedicato alla coppia (traiettoria, modo)."""
    seq = np.random.SeedSequence(base_seed, spawn_key=(path_index, mode))
    return np.random.Generator(np.random.Philox(seq))


def standard_normals(base_seed: int, path_index: int, m: int, n_steps: int) -> np.ndarray:
    """@brief ξ di forma (m, n_steps); la riga j dipende solo da (seed, path, j)."""
    xi = np.empty((m, n_steps))
    for j in range(m):
        xi[j] = mode_stream(base_seed, path_index, j).standard_normal(n_steps)
    return xi


def _is_diagonal(lower: np.ndarray) -> bool:
    return not np.any(lower - np.diag(np.diag(lower)))


def generate_increments(chol: CholeskyFactor | np.ndarray, config: NoisePathConfig) -> NoiseIncrements:
    """
    @brief Genera ΔB_j^n per j = 1..M, n = 0..n_steps-1.
    @param chol Fattore di Cholesky di α (dimensione >= config.m).
    @param config Parametri della traiettoria.
    @return NoiseIncrements con E[ΔB_i ΔB_j] = τ·α_ij.
    @throws ValueError Se il fattore ha dimensione < M.
    """
    lower = np.asarray(chol.lower if isinstance(chol, CholeskyFactor) else chol, dtype=float)
    if lower.shape[0] < config.m:
        raise ValueError(f"fattore di dimensione {lower.shape[0]} < M={config.m}")
    low = lower[: config.m, : config.m]
    xi = standard_normals(config.base_seed, config.path_index, config.m, config.n_steps)
    scale = math.sqrt(config.tau)
    diagonal = _is_diagonal(low)
    if diagonal:
        values = scale * (np.diag(low)[:, None] * xi)
    else:
        values = scale * (low @ xi)
    values.setflags(write=False)
    return NoiseIncrements(values=values, config=config, diagonal=diagonal)


def generate_batch(
    chol: CholeskyFactor | np.ndarray,
    m: int,
    tau: float,
    n_steps: int,
    base_seed: int,
    path_indices: Sequence[int],
) -> np.ndarray:
    """
    @brief Incrementi di un blocco di traiettorie, disposti per passo.
    @return Array (n_steps, P, M): [n, p] è la colonna n della traiettoria path_indices[p].
    """
    out = np.empty((n_steps, len(path_indices), m))
    for p, idx in enumerate(path_indices):
        cfg = NoisePathConfig(m=m, tau=tau, n_steps=n_steps, base_seed=base_seed, path_index=idx)
        out[:, p, :] = generate_increments(chol, cfg).values.T
    return out


def restrict_increments(inc: NoiseIncrements, m_coarse: int) -> NoiseIncrements:
    """
    @brief Tronca gli incrementi ai primi m_coarse modi.
    @param inc Incrementi fini (da α diagonale).
    @param m_coarse Nuovo numero di modi (<= inc.m).
    @return Righe 1..m_coarse invariate.
    @throws ValueError Se α non è diagonale o m_coarse > inc.m.
    """
    if not inc.diagonal:
        raise ValueError(
            "restrizione definita solo per α diagonale: con α densa la legge grossolana non è preservata"
        )
    if not 1 <= m_coarse <= inc.m:
        raise ValueError(f"m_coarse={m_coarse} fuori da [1, {inc.m}]")
    if m_coarse == inc.m:
        return inc
    values = inc.values[:m_coarse]
    return NoiseIncrements(values=values, config=replace(inc.config, m=m_coarse), diagonal=True)
