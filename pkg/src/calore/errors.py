"""
@file errors.py
@brief Eccezioni applicative per i fallimenti numerici.
@ingroup core_module

@details
Gli errori di dominio (indici, intervalli, parametri) restano ValueError.
Qui vivono i fallimenti a runtime che la CLI mappa su exit code 1, più
ConfigError (exit code 2).
"""

from __future__ import annotations


class CaloreError(RuntimeError):
    """@brief Base per i fallimenti numerici del pacchetto."""


class NonFiniteStateError(CaloreError):
    """
    @brief Stato NaN/Inf durante l'integrazione.
    @details step: indice del passo in cui lo stato è diventato non finito.
    """

    def __init__(self, step: int) -> None:
        super().__init__(f"Stato non finito al passo {step}")
        self.step = step


class FactorizationError(CaloreError):
    """@brief Cholesky fallita anche con il jitter massimo."""

    def __init__(self, minor: int, jitter: float) -> None:
        super().__init__(
            f"Cholesky fallita: minore principale {minor} non definito positivo (jitter={jitter:g})"
        )
        self.minor = minor
        self.jitter = jitter


class ConvergenceFailure(CaloreError):
    """@brief Iterazione (es. power iteration) non convergente entro il limite."""


class AllPathsDivergedError(CaloreError):
    """@brief Tutte le traiettorie dell'ensemble sono divergenti."""


class NotPositiveSemidefiniteError(CaloreError):
    """@brief Matrice α non semidefinita positiva oltre la tolleranza."""

    def __init__(self, min_eigenvalue: float, tolerance: float) -> None:
        super().__init__(
            f"α non PSD: autovalore minimo {min_eigenvalue:.3e} < -{tolerance:.3e}"
        )
        self.min_eigenvalue = min_eigenvalue
        self.tolerance = tolerance


class ConfigError(Exception):
    """
    @brief File di configurazione mancante, TOML non valido o campi non validi.
    @details problems: diagnostica per riga/campo; la CLI esce con codice 2.
    """

    def __init__(self, problems: list[str]) -> None:
        super().__init__("; ".join(problems))
        self.problems = problems
