"""
@file repository.py
@brief Layer repository per la persistenza degli artefatti su file piatti (CSV/JSON).
@ingroup storage_module

@details
Isola formati e intestazioni dal resto dell'applicazione. Le intestazioni CSV
sono stabili tra le versioni:
- curva:       t,mean_sq,ci_low,ci_high,diverged
- traiettoria: t,norm_sq[,u_1..u_N]
- regione:     beta1,beta0,analytic_stable,numeric_stable,metric
- convergenza: ladder,N,M,lambda_N,rho_M,error,ci,error_T,trusted
- tensore:     j,k,i,value
- alpha:       i,j,value
- confronto:   t,<etichetta>...
"""

from __future__ import annotations
import csv
import logging
import os
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

from pydantic import BaseModel

from calore.domain.models import ConvergenceReport, MeanSquareCurve, RegionGrid
from calore.sim.integrators import Trajectory
from calore.spectral.basis import TripleProductTensor
from calore.spectral.covariance import AlphaMatrix

logger = logging.getLogger(__name__)

CURVE_HEADER = ["t", "mean_sq", "ci_low", "ci_high", "diverged"]
REGION_HEADER = ["beta1", "beta0", "analytic_stable", "numeric_stable", "metric"]
CONVERGENCE_HEADER = ["ladder", "N", "M", "lambda_N", "rho_M", "error", "ci", "error_T", "trusted"]
TENSOR_HEADER = ["j", "k", "i", "value"]
ALPHA_HEADER = ["i", "j", "value"]


def ensure_directory(directory: str | Path) -> Path:
    """
    @brief Crea la directory di output e verifica che sia scrivibile.
    @throws PermissionError Se la directory non è scrivibile.
    """
    p = Path(directory)
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise PermissionError(f"directory di output non scrivibile: {p}")
    return p


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    logger.info("scritto %s", path)
    return path


def _fmt(x: float) -> str:
    return repr(float(x))


def write_curve_csv(path: str | Path, curve: MeanSquareCurve) -> Path:
    """
    @brief Curva E‖U_n‖²; la colonna diverged ripete il conteggio complessivo.
    """
    rows = (
        (_fmt(t), _fmt(m), _fmt(lo), _fmt(hi), curve.diverged_count)
        for t, m, lo, hi in zip(curve.t, curve.mean_sq, curve.ci_low(), curve.ci_high(), strict=True)
    )
    return _write_rows(Path(path), CURVE_HEADER, rows)


def write_trajectory_csv(path: str | Path, traj: Trajectory) -> Path:
    """@brief Norma² per passo ed eventualmente i coefficienti u_1..u_N."""
    header = ["t", "norm_sq"]
    states = traj.states
    if states is not None:
        header += [f"u_{k}" for k in range(1, states.shape[1] + 1)]
    rows = []
    for n, (t, ns) in enumerate(zip(traj.times, traj.norm_sq, strict=True)):
        row = [_fmt(t), _fmt(ns)]
        if states is not None:
            row += [_fmt(v) for v in states[n]]
        rows.append(row)
    return _write_rows(Path(path), header, rows)


def write_region_csv(path: str | Path, grid: RegionGrid) -> Path:
    rows = (
        (_fmt(c.beta1), _fmt(c.beta0), int(c.analytic_stable), int(c.numeric_stable), _fmt(c.metric))
        for c in grid.cells
    )
    return _write_rows(Path(path), REGION_HEADER, rows)


def write_convergence_csv(path: str | Path, report: ConvergenceReport) -> Path:
    rows = (
        (lv.ladder, lv.n, lv.m, _fmt(lv.lambda_n), _fmt(lv.rho_m), _fmt(lv.error),
         _fmt(lv.ci), _fmt(lv.error_t), int(lv.trusted))
        for lv in report.levels
    )
    return _write_rows(Path(path), CONVERGENCE_HEADER, rows)


def write_tensor_csv(path: str | Path, tensor: TripleProductTensor) -> Path:
    """@brief Solo le terne (j,k,i) a parità dispari, in ordine lessicografico."""
    rows = ((j, k, i, _fmt(v)) for j, k, i, v in tensor.iter_entries())
    return _write_rows(Path(path), TENSOR_HEADER, rows)


def alpha_rows(alpha: AlphaMatrix) -> list[tuple[int, int, float]]:
    """@brief Voci uniche (i <= j); per α diagonale solo la diagonale."""
    a = alpha.entries
    out = []
    for i in range(alpha.m):
        for j in range(i, alpha.m):
            if alpha.diagonal and i != j:
                continue
            out.append((i + 1, j + 1, float(a[i, j])))
    return out


def write_alpha_csv(path: str | Path, alpha: AlphaMatrix) -> Path:
    rows = ((i, j, _fmt(v)) for i, j, v in alpha_rows(alpha))
    return _write_rows(Path(path), ALPHA_HEADER, rows)


def write_compare_csv(path: str | Path, curves: Mapping[str, MeanSquareCurve]) -> Path:
    """
    @brief Una colonna mean_sq per variante su una griglia temporale comune.
    @throws ValueError Se le varianti non condividono la griglia temporale.
    """
    labels = list(curves)
    if not labels:
        raise ValueError("nessuna curva da confrontare")
    t = curves[labels[0]].t
    for lab in labels[1:]:
        if curves[lab].t != t:
            raise ValueError(f"la variante {lab!r} ha una griglia temporale diversa")
    rows = (
        [_fmt(tn)] + [_fmt(curves[lab].mean_sq[n]) for lab in labels]
        for n, tn in enumerate(t)
    )
    return _write_rows(Path(path), ["t", *labels], rows)


def write_json(path: str | Path, model: BaseModel) -> Path:
    """@brief Serializza un contratto pydantic (indentazione 2, UTF-8)."""
    p = Path(path)
    p.write_text(model.model_dump_json(indent=2), encoding="utf-8")
    logger.info("scritto %s", p)
    return p


def read_csv(path: str | Path) -> list[dict[str, str]]:
    """@brief Rilegge un CSV scritto da questo modulo (righe come dizionari)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
