"""
@file convergence.py
@brief Studio dell'errore forte a rumore accoppiato per i troncamenti (N, M).
@ingroup analysis_module

@details
Per ogni traiettoria si genera una volta il rumore fine a M_ref modi; il
sistema di riferimento e ogni livello (N, M) vengono integrati sullo stesso
rumore ristretto ai primi M modi. L'errore per traiettoria è
‖Û_ref − Û_{N,M}‖₂² nello spazio comune dei coefficienti (estensione con zeri).

Il sup su [0, T] è approssimato dal massimo su 50 istanti equispaziati.
Il riferimento è discreto: il pavimento è l'errore del livello
(N_ref/2, M_ref/2) e i livelli sotto 10× il pavimento non sono affidabili.
"""

from __future__ import annotations
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from calore.domain.models import ConvergenceLevel, ConvergenceReport
from calore.errors import CaloreError
from calore.sim.galerkin import SystemSpec, assemble, embed, poly_x_1mx, project_initial
from calore.sim.integrators import StepScheme, integrate_batch
from calore.sim.montecarlo import Moments, chunk_moments, path_chunks, run_ordered
from calore.sim.noise import generate_batch
from calore.spectral.basis import build_tensor, eigenvalue
from calore.spectral.covariance import CovarianceModel, DiagonalSpectral, alpha_matrix, rho

logger = logging.getLogger(__name__)

CHECKPOINTS = 50
TRUST_FACTOR = 10.0


@dataclass(frozen=True)
class Level:
    """@brief Livello di troncamento (N, M) con la scala di appartenenza."""
    n: int
    m: int
    ladder: str = "custom"


def ladder_levels(
    n_ladder: Sequence[int], m_ladder: Sequence[int], ref: tuple[int, int]
) -> list[Level]:
    """
    @brief Livelli delle due scale: N variabile con M = M_ref, M variabile con N = N_ref.
    """
    n_ref, m_ref = ref
    levels = [Level(n, m_ref, "N") for n in sorted(set(n_ladder))]
    levels += [Level(n_ref, m, "M") for m in sorted(set(m_ladder))]
    return levels


def _classify(n: int, m: int, ref: tuple[int, int]) -> str:
    if m == ref[1]:
        return "N"
    if n == ref[0]:
        return "M"
    return "custom"


def _validate(levels: Sequence[Level], ref: tuple[int, int]) -> None:
    n_ref, m_ref = ref
    if n_ref < 2 or m_ref < 2:
        raise ValueError(f"riferimento ({n_ref}, {m_ref}) troppo grossolano: servono N_ref, M_ref >= 2")
    for lv in levels:
        if lv.n < 1 or lv.m < 1:
            raise ValueError(f"livello ({lv.n}, {lv.m}) non valido")
        if (lv.n, lv.m) == ref:
            continue
        if lv.n > n_ref or lv.m > m_ref:
            raise ValueError(f"il riferimento ({n_ref}, {m_ref}) non è più fine del livello ({lv.n}, {lv.m})")
        if lv.n < n_ref and n_ref < 2 * lv.n:
            raise ValueError(f"serve N_ref >= 2·N: N_ref={n_ref}, N={lv.n}")
        if lv.m < m_ref and m_ref < 2 * lv.m:
            raise ValueError(f"serve M_ref >= 2·M: M_ref={m_ref}, M={lv.m}")


def checkpoint_steps(n_steps: int, count: int = CHECKPOINTS) -> list[int]:
    """@brief Indici di passo equispaziati in (0, n_steps], ultimo incluso."""
    raw = np.rint(np.linspace(0, n_steps, count + 1)[1:]).astype(int)
    return sorted({int(s) for s in raw if s >= 1})


def _fit(x: Sequence[float], y: Sequence[float]) -> tuple[float | None, float | None]:
    if len(x) < 2:
        return None, None
    res = stats.linregress(np.log(x), np.log(y))
    stderr = float(res.stderr) if len(x) > 2 else None
    return float(res.slope), stderr


def coupled_error_study(
    model: CovarianceModel,
    levels: Sequence[Level | tuple[int, int]],
    ref: tuple[int, int],
    beta0: float,
    beta1: float,
    tau: float,
    horizon: float,
    paths: int,
    seed: int,
    *,
    u0: Callable[[np.ndarray], np.ndarray] | Sequence[float] = poly_x_1mx,
    diffusion: float = 1.0,
    threads: int = 1,
) -> ConvergenceReport:
    """
    @brief Errori forti per livello con rumore accoppiato e pendenze log-log.
    @param model Covarianza diagonale (la restrizione del rumore lo richiede).
    @param levels Livelli (N, M); tuple semplici vengono assegnate alla scala per confronto con ref.
    @param ref Risoluzione di riferimento (N_ref, M_ref).
    @param horizon Tempo finale T.
    @param paths Numero di traiettorie P (>= 2).
    @return ConvergenceReport con errore (sup sui checkpoint), IC, pavimento e pendenze.
    @throws ValueError Se il modello non è diagonale o il riferimento non è più fine.
    @throws CaloreError Se una traiettoria diverge.
    """
    if not isinstance(model, DiagonalSpectral):
        raise ValueError("lo studio accoppiato richiede rumore diagonale")
    if paths < 2:
        raise ValueError(f"servono almeno 2 traiettorie, ricevute {paths}")
    if not tau > 0.0 or not horizon > 0.0:
        raise ValueError("servono tau > 0 e orizzonte > 0")
    lv = [
        x if isinstance(x, Level) else Level(int(x[0]), int(x[1]), _classify(int(x[0]), int(x[1]), ref))
        for x in levels
    ]
    _validate(lv, ref)
    n_ref, m_ref = ref
    floor_level = (n_ref // 2, m_ref // 2)
    n_steps = max(1, int(round(horizon / tau)))
    marks = checkpoint_steps(n_steps)

    tensor = build_tensor(n_ref, m_ref)
    alpha = alpha_matrix(model, m_ref)
    chol = alpha.chol

    def make(n: int, m: int):
        spec = SystemSpec(n=n, m=m, beta0=beta0, beta1=beta1, covariance=model, diffusion=diffusion)
        return assemble(spec, tensor=tensor, alpha=alpha)

    keys = [ref] + [(x.n, x.m) for x in lv] + [floor_level]
    systems = {key: make(*key) for key in dict.fromkeys(keys)}
    u_ref = project_initial(u0, n_ref)
    starts = {key: project_initial(u_ref.coefficients, key[0]) for key in systems}
    logger.info(
        "studio accoppiato: ref=(%d,%d) livelli=%d passi=%d P=%d", n_ref, m_ref, len(lv), n_steps, paths
    )

    def run_chunk(idx: range) -> dict[tuple[int, int], Moments]:
        fine = generate_batch(chol, m_ref, tau, n_steps, seed, idx)
        out_ref = integrate_batch(
            systems[ref], StepScheme.IMPLICIT_EULER, u_ref, fine, tau, keep_at=marks
        )
        if out_ref.diverged.any():
            raise CaloreError("traiettoria di riferimento divergente nello studio di convergenza")
        snap_ref = out_ref.snapshots
        result: dict[tuple[int, int], Moments] = {}
        for key, sys in systems.items():
            if key == ref:
                err = np.zeros((len(idx), len(marks)))
            else:
                res = integrate_batch(sys, StepScheme.IMPLICIT_EULER, starts[key],
                                      fine[:, :, : key[1]], tau, keep_at=marks)
                if res.diverged.any():
                    raise CaloreError(f"traiettoria divergente al livello {key}")
                diff = embed(res.snapshots, n_ref) - snap_ref
                # (K, P, N) -> (P, K)
                err = np.einsum("kpn,kpn->pk", diff, diff)
            result[key] = chunk_moments(err, np.zeros(len(idx), dtype=bool))
        logger.debug("blocco %d-%d completato", idx.start, idx.stop - 1)
        return result

    totals: dict[tuple[int, int], Moments] | None = None
    for chunk in run_ordered(run_chunk, path_chunks(paths), threads):
        if totals is None:
            totals = chunk
        else:
            totals = {key: totals[key].merge(chunk[key]) for key in totals}
    assert totals is not None

    def summary(key: tuple[int, int]) -> tuple[float, float, float]:
        mom = totals[key]
        half = mom.halfwidth()
        mean = np.maximum(mom.mean, 0.0)
        k = int(np.argmax(mean))
        return float(mean[k]), float(half[k]), float(mean[-1])

    floor, _, _ = summary(floor_level)
    warnings: list[str] = []
    records: list[ConvergenceLevel] = []
    for x in lv:
        err, ci, err_t = summary((x.n, x.m))
        trusted = (x.n, x.m) == ref or err >= TRUST_FACTOR * floor
        records.append(
            ConvergenceLevel(
                ladder=x.ladder, n=x.n, m=x.m,
                lambda_n=diffusion * eigenvalue(x.n),
                rho_m=rho(model, x.m),
                error=err, ci=ci, error_t=err_t, trusted=trusted,
            )
        )
        if not trusted:
            msg = f"livello ({x.n},{x.m}) sotto {TRUST_FACTOR:g}× il pavimento {floor:.3e}"
            logger.warning(msg)
            warnings.append(msg)

    report = ConvergenceReport(
        n_ref=n_ref, m_ref=m_ref, tau=tau, horizon=n_steps * tau, paths=paths, seed=seed,
        beta0=beta0, beta1=beta1, covariance=model.label, floor=floor, levels=records,
    )
    report.slope_n, report.slope_n_stderr = _ladder_slope(records, "N", lambda r: r.lambda_n, warnings)
    report.slope_m, report.slope_m_stderr = _ladder_slope(records, "M", lambda r: float(r.m), warnings)
    report.warnings = warnings
    return report


def _ladder_slope(
    records: Sequence[ConvergenceLevel],
    ladder: str,
    abscissa: Callable[[ConvergenceLevel], float],
    warnings: list[str],
) -> tuple[float | None, float | None]:
    usable = [r for r in records if r.ladder == ladder and r.error > 0.0]
    trusted = [r for r in usable if r.trusted]
    if len(trusted) >= 2:
        chosen = trusted
    else:
        chosen = usable
        if len(usable) >= 2:
            msg = f"pendenza {ladder} stimata anche su livelli non affidabili"
            logger.warning(msg)
            warnings.append(msg)
    if len(chosen) < 2:
        return None, None
    chosen = sorted(chosen, key=abscissa)
    slope, stderr = _fit([abscissa(r) for r in chosen], [r.error for r in chosen])
    if slope is not None and not math.isfinite(slope):
        return None, None
    return slope, stderr
