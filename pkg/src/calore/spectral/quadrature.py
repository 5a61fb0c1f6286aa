"""
@file quadrature.py
@brief Regole di quadratura su [0,1] usate da base, covarianza e proiezione.
@ingroup spectral_module

@details
Gauss–Legendre composta: l'intervallo è diviso in pannelli uguali, ciascuno con
una regola di ordine fisso. Per integrandi trigonometrici con frequenze fino a
qualche centinaio di π l'errore resta a livello di arrotondamento.
"""

from __future__ import annotations
import math
from functools import lru_cache

import numpy as np

PANEL_ORDER = 10


@lru_cache(maxsize=32)
def _composite_rule(nodes: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    panels = max(1, math.ceil(nodes / order))
    ref_x, ref_w = np.polynomial.legendre.leggauss(order)
    h = 1.0 / panels
    left = np.arange(panels) * h
    xs = (left[:, None] + 0.5 * h * (ref_x[None, :] + 1.0)).ravel()
    ws = np.tile(0.5 * h * ref_w, panels)
    xs.setflags(write=False)
    ws.setflags(write=False)
    return xs, ws


def composite_gauss_legendre(nodes: int, order: int = PANEL_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """
    @brief Nodi e pesi Gauss–Legendre composti su [0,1].
    @param nodes Numero (minimo) di nodi richiesti; arrotondato a multipli di order.
    @param order Ordine della regola per pannello.
    @return (xs, ws) array di sola lettura.
    """
    if nodes < 1 or order < 1:
        raise ValueError(f"nodes/order devono essere positivi: nodes={nodes} order={order}")
    return _composite_rule(int(nodes), int(order))


@lru_cache(maxsize=8)
def gauss_legendre(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """@brief Regola Gauss–Legendre globale su [0,1] (per le quadrature 2-D dei kernel)."""
    if nodes < 1:
        raise ValueError(f"nodes deve essere positivo: {nodes}")
    x, w = np.polynomial.legendre.leggauss(int(nodes))
    xs = 0.5 * (x + 1.0)
    ws = 0.5 * w
    xs.setflags(write=False)
    ws.setflags(write=False)
    return xs, ws
