"""
@file cli.py
@brief CLI per esperimenti: simulazione, verifica di stabilità, regioni,
       convergenza, dump dei coefficienti e confronto tra varianti.
@ingroup cli_module

@details
Comandi:
- simulate: curva E‖U_n‖² (CSV/SVG) e manifest JSON
- check: scalari e condizioni di stabilità (tabella su stdout + JSON)
- region: mappa di stabilità nel piano (β1, β0)
- converge: studio di convergenza a rumore accoppiato
- coeffs: dump del tensore a_jki o della matrice α
- compare: più varianti sugli stessi seed, una curva per variante

Exit code: 0 successo, 1 errore a runtime, 2 errore di configurazione.
Tutti i comandi accettano --set sezione.chiave=valore, --threads e --log-level.
"""

from __future__ import annotations
import argparse
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from calore import __version__
from calore.analysis.convergence import Level, coupled_error_study, ladder_levels
from calore.analysis.stability import (
    AnalyticClassifier,
    MonteCarloClassifier,
    boundary_beta0,
    build_stability_report,
    region_sweep,
)
from calore.config import CaloreSettings, RunConfig, apply_overrides, load_config, validate_config
from calore.domain.models import MeanSquareCurve, RunManifest, StabilityReport, VariantResult
from calore.errors import CaloreError, ConfigError
from calore.sim.galerkin import assemble
from calore.sim.integrators import integrate
from calore.sim.montecarlo import EnsembleConfig, decay_rate_fit, mean_square_curve
from calore.sim.noise import NoisePathConfig, generate_increments
from calore.spectral.basis import build_tensor
from calore.spectral.covariance import alpha_matrix
from calore.storage.repository import (
    ensure_directory,
    write_alpha_csv,
    write_compare_csv,
    write_convergence_csv,
    write_curve_csv,
    write_json,
    write_region_csv,
    write_tensor_csv,
    write_trajectory_csv,
)
from calore.storage.svg import line_plot, region_heatmap, write_svg

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _Context:
    """@brief Stato condiviso di un comando: config, directory, thread, artefatti."""

    def __init__(self, cfg: RunConfig, raw: dict[str, Any], out_dir: Path, threads: int) -> None:
        self.cfg = cfg
        self.raw = raw
        self.out_dir = out_dir
        self.threads = threads
        self.artifacts: list[str] = []

    def wants(self, fmt: str) -> bool:
        return fmt in self.cfg.output.formats

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.artifacts.append(str(p))
        return p

    def resolved(self) -> dict[str, Any]:
        spec = self.cfg.system_spec()
        out: dict[str, Any] = {
            "n": spec.n,
            "m": spec.m,
            "beta0": spec.beta0,
            "beta1": spec.beta1,
            "diffusion": spec.diffusion,
            "tau": self.cfg.time.tau,
            "n_steps": self.cfg.time.n_steps,
            "scheme": str(self.cfg.time.scheme),
            "covariance": spec.covariance.label,
        }
        ex = self.cfg.physical()
        if ex is not None:
            out["physical"] = {
                "nu": ex[0], "lam": ex[1],
                "mapping": "diffusion = nu/2, beta0 = 0, beta1 = sqrt(lam)",
            }
        return out

    def cholesky_jitter(self) -> float | None:
        """@brief Jitter usato per fattorizzare α (None se α non è fattorizzabile)."""
        spec = self.cfg.system_spec()
        try:
            return alpha_matrix(spec.covariance, spec.m).chol.jitter
        except (ValueError, CaloreError):
            return None

    def manifest(self, command: str, **extra: Any) -> RunManifest:
        return RunManifest(
            command=command,
            software_version=__version__,
            created_at=datetime.now(timezone.utc).isoformat(),
            seed=self.cfg.mc.seed,
            threads=self.threads,
            config=self.cfg.model_dump(mode="json"),
            resolved=self.resolved(),
            cholesky_jitter=self.cholesky_jitter(),
            artifacts=list(self.artifacts),
            **extra,
        )


def _safe_fit(curve: MeanSquareCurve):
    try:
        return decay_rate_fit(curve)
    except ValueError as exc:
        logger.warning("fit del decadimento non disponibile: %s", exc)
        return None


def _run_curve(cfg: RunConfig, threads: int) -> MeanSquareCurve:
    spec = cfg.system_spec()
    sys_ = assemble(spec)
    ens = EnsembleConfig(
        paths=cfg.mc.paths, base_seed=cfg.mc.seed, tau=cfg.time.tau,
        n_steps=cfg.time.n_steps, scheme=cfg.time.scheme, threads=threads,
    )
    logger.info("simulazione: N=%d M=%d P=%d passi=%d", spec.n, spec.m, ens.paths, ens.n_steps)
    return mean_square_curve(sys_, ens, cfg.initial_state())


def cmd_simulate(ctx: _Context) -> int:
    cfg = ctx.cfg
    curve = _run_curve(cfg, ctx.threads)
    if ctx.wants("csv"):
        write_curve_csv(ctx.path("curve.csv"), curve)
    if ctx.wants("svg"):
        svg = line_plot({"E|U|^2": (curve.t, curve.mean_sq)}, log_y=cfg.output.log_y,
                        title="curva in media quadratica")
        write_svg(ctx.path("curve.svg"), svg)
    if cfg.output.trajectory:
        spec = cfg.system_spec()
        sys_ = assemble(spec)
        inc = generate_increments(
            sys_.alpha.chol,
            NoisePathConfig(m=spec.m, tau=cfg.time.tau, n_steps=cfg.time.n_steps,
                            base_seed=cfg.mc.seed, path_index=0),
        )
        traj = integrate(sys_, cfg.time.scheme, cfg.initial_state(), inc, cfg.time.tau,
                         keep_states=cfg.output.keep_states)
        write_trajectory_csv(ctx.path("trajectory.csv"), traj)
    fit = _safe_fit(curve)
    manifest_path = ctx.path("manifest.json")
    write_json(manifest_path, ctx.manifest("simulate", decay=fit))
    print(json.dumps({"artifacts": ctx.artifacts, "diverged": curve.diverged_count,
                      "rate": None if fit is None else fit.rate}, ensure_ascii=False))
    return EXIT_OK


def _fmt_value(v: Any) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return "stabile" if v else "instabile"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def format_report(report: StabilityReport) -> str:
    """@brief Tabella leggibile di scalari, margini e verdetti."""
    rows = [
        ("kappa", report.kappa if report.kappa_applicable else math.inf),
        ("kappa_tilde2", report.kappa_tilde2),
        ("kappa_tilde1_approx", report.kappa_tilde1_approx),
        ("rho(M)", report.rho_at_m),
        ("sum_q", report.sum_q),
        ("cond_exact", report.cond_exact),
        ("cond_spectral", report.cond_spectral),
        ("cond_kappa_tilde1", report.cond_kappa_tilde1),
        ("cond_sum_q", report.cond_sum_q),
        ("implicit_ratio", report.implicit_ratio),
        ("explicit_lhs", report.explicit_lhs),
    ]
    if report.physical_margin is not None:
        rows.append(("physical_margin", report.physical_margin))
    lines = [f"{name:<22}{_fmt_value(v)}" for name, v in rows]
    lines.append("")
    for name, verdict in report.verdicts.model_dump().items():
        lines.append(f"verdetto {name:<13}{'non applicabile' if verdict is None else _fmt_value(verdict)}")
    return "\n".join(lines)


def cmd_check(ctx: _Context) -> int:
    cfg = ctx.cfg
    report = build_stability_report(
        cfg.system_spec(), cfg.time.tau, cfg.time.scheme, physical=cfg.physical()
    )
    if ctx.wants("json"):
        write_json(ctx.path("stability_report.json"), report)
    print(format_report(report))
    return EXIT_OK


def cmd_region(ctx: _Context) -> int:
    cfg = ctx.cfg
    reg = cfg.region
    if reg is None:
        raise ConfigError(["region: sezione mancante (richiesta dal comando region)"])
    if reg.classifier == "monte_carlo":
        classifier: AnalyticClassifier | MonteCarloClassifier = MonteCarloClassifier(
            paths=reg.paths, horizon=reg.horizon, threshold=reg.threshold, seed=cfg.mc.seed
        )
    else:
        classifier = AnalyticClassifier()
    grid = region_sweep(
        cfg.system_spec(),
        (reg.beta1[0], reg.beta1[1], reg.beta1_count),
        (reg.beta0[0], reg.beta0[1], reg.beta0_count),
        cfg.time.tau,
        cfg.time.scheme,
        classifier,
        u0=cfg.initial_state(),
        threads=ctx.threads,
    )
    if ctx.wants("csv"):
        write_region_csv(ctx.path("region.csv"), grid)
    if ctx.wants("json"):
        write_json(ctx.path("region.json"), grid)
    if ctx.wants("svg"):
        kappa = grid.kappa
        boundary = None if kappa is None else (lambda b1: boundary_beta0(b1, kappa, grid.lambda1))
        write_svg(ctx.path("region.svg"), region_heatmap(grid, boundary))
    write_json(ctx.path("manifest.json"), ctx.manifest("region"))
    stable = sum(c.numeric_stable for c in grid.cells)
    print(json.dumps({"artifacts": ctx.artifacts, "cells": len(grid.cells), "numeric_stable": stable}))
    return EXIT_OK


def cmd_converge(ctx: _Context) -> int:
    cfg = ctx.cfg
    conv = cfg.convergence
    if conv is None:
        raise ConfigError(["convergence: sezione mancante (richiesta dal comando converge)"])
    ref = (conv.n_ref, conv.m_ref)
    levels: list[Level | tuple[int, int]] = list(ladder_levels(conv.n_ladder, conv.m_ladder, ref))
    levels += [tuple(x) for x in conv.levels]
    diffusion, beta0, beta1 = cfg.system.effective()
    horizon = conv.horizon if conv.horizon is not None else cfg.time.n_steps * cfg.time.tau
    report = coupled_error_study(
        cfg.covariance(), levels, ref, beta0, beta1, cfg.time.tau, horizon,
        conv.paths or cfg.mc.paths, cfg.mc.seed,
        u0=cfg.initial_state(conv.n_ref).coefficients, diffusion=diffusion, threads=ctx.threads,
    )
    if ctx.wants("csv"):
        write_convergence_csv(ctx.path("convergence.csv"), report)
    write_json(ctx.path("convergence_report.json"), report)
    if ctx.wants("svg"):
        series = {}
        for ladder in ("N", "M"):
            pts = [(lv.n if ladder == "N" else lv.m, lv.error) for lv in report.levels
                   if lv.ladder == ladder and lv.error > 0.0]
            if pts:
                series[f"ladder {ladder}"] = ([math.log10(x) for x, _ in pts], [e for _, e in pts])
        write_svg(ctx.path("convergence.svg"),
                  line_plot(series, log_y=True, title="errore forte", xlabel="log10 N / M", ylabel="errore"))
    write_json(ctx.path("manifest.json"), ctx.manifest("converge"))
    print(json.dumps({"artifacts": ctx.artifacts, "slope_n": report.slope_n, "slope_m": report.slope_m}))
    return EXIT_OK


def cmd_coeffs(ctx: _Context, what: str) -> int:
    cfg = ctx.cfg
    spec = cfg.system_spec()
    if what == "tensor":
        path = write_tensor_csv(ctx.path("tensor.csv"), build_tensor(spec.n, spec.m))
    else:
        path = write_alpha_csv(ctx.path("alpha.csv"), alpha_matrix(spec.covariance, spec.m))
    print(path.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_compare(ctx: _Context) -> int:
    cfg = ctx.cfg
    if cfg.compare is None:
        raise ConfigError(["compare: sezione mancante (richiesta dal comando compare)"])
    curves: dict[str, MeanSquareCurve] = {}
    results: list[VariantResult] = []
    for var in cfg.compare.variants:
        raw = apply_overrides(ctx.raw, var.overrides)
        if var.scheme is not None:
            raw = apply_overrides(raw, {"time.scheme": str(var.scheme)})
        raw.pop("compare", None)
        vcfg = validate_config(raw)
        logger.info("variante %s", var.label)
        curve = _run_curve(vcfg, ctx.threads)
        curves[var.label] = curve
        results.append(VariantResult(label=var.label, overrides=var.overrides,
                                     decay=_safe_fit(curve), diverged_count=curve.diverged_count))
    if ctx.wants("csv"):
        write_compare_csv(ctx.path("compare.csv"), curves)
    if ctx.wants("svg"):
        series = {lab: (c.t, c.mean_sq) for lab, c in curves.items()}
        write_svg(ctx.path("compare.svg"), line_plot(series, log_y=cfg.output.log_y, title="confronto"))
    write_json(ctx.path("manifest.json"), ctx.manifest("compare", variants=results))
    summary = {r.label: (None if r.decay is None else r.decay.rate) for r in results}
    print(json.dumps({"artifacts": ctx.artifacts, "rates": summary}, ensure_ascii=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="calore")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("config", help="File TOML dell'esperimento")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SEZIONE.CHIAVE=VALORE", help="Override di un campo (ripetibile)")
        sp.add_argument("--threads", type=int, default=None,
                        help="Thread di lavoro (default: CALORE_THREADS o numero di CPU)")
        sp.add_argument("--log-level", default=None, help="Livello di logging (default: CALORE_LOG_LEVEL o INFO)")
        sp.add_argument("--output-dir", default=None, help="Directory di output (priorità su CALORE_OUTPUT_DIR)")

    common(sub.add_parser("simulate", help="Curva Monte Carlo di E|U_n|^2"))
    common(sub.add_parser("check", help="Condizioni di stabilità e fattori di amplificazione"))
    common(sub.add_parser("region", help="Mappa di stabilità nel piano (beta1, beta0)"))
    common(sub.add_parser("converge", help="Studio di convergenza a rumore accoppiato"))
    coeffs = sub.add_parser("coeffs", help="Dump del tensore a_jki o della matrice alpha")
    common(coeffs)
    coeffs.add_argument("--what", choices=("tensor", "alpha"), required=True)
    common(sub.add_parser("compare", help="Confronto tra varianti sugli stessi seed"))
    return p


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def main(argv: list[str] | None = None) -> int:
    """
    @brief Entry point CLI.
    @return Exit code (0, 1 o 2).

    @details
    Carica la config (con override), risolve directory e thread da argomenti e
    ambiente, esegue il comando. ConfigError → 2; CaloreError/ValueError → 1.
    """
    args = build_parser().parse_args(argv)
    settings = CaloreSettings()
    _configure_logging(args.log_level or settings.log_level)

    try:
        cfg, raw = load_config(args.config, args.overrides)
        out_dir = args.output_dir or settings.output_dir or cfg.output.directory
        threads = args.threads or settings.threads
        ctx = _Context(cfg, raw, ensure_directory(out_dir), max(1, threads))
        if args.cmd == "simulate":
            return cmd_simulate(ctx)
        if args.cmd == "check":
            return cmd_check(ctx)
        if args.cmd == "region":
            return cmd_region(ctx)
        if args.cmd == "converge":
            return cmd_converge(ctx)
        if args.cmd == "coeffs":
            return cmd_coeffs(ctx, args.what)
        if args.cmd == "compare":
            return cmd_compare(ctx)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"errore di configurazione: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (CaloreError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        print(f"errore: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
