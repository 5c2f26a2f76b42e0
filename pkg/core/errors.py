"""Error hierarchy shared by every numerical module.

Each error carries a short machine-readable ``code`` so sweep rows and run
manifests can record failures without keeping exception objects around.
"""
from typing import Any, Dict, Optional


class HelmstabError(Exception):
    code = "helmstab_error"

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "detail": str(self), **self.context}


class ConfigError(HelmstabError):
    code = "config_error"


# fields
class InvalidDimension(HelmstabError):
    code = "invalid_dimension"


class InvalidResolution(HelmstabError):
    code = "invalid_resolution"


class SupportViolation(HelmstabError):
    code = "support_violation"


# forward_dn
class NearSingular(HelmstabError):
    code = "near_singular"


class SolveFailure(HelmstabError):
    code = "solve_failure"


class ResonantMode(HelmstabError):
    code = "resonant_mode"


class TailTooLarge(HelmstabError):
    code = "tail_too_large"


# cgo
class UnsupportedDimension(HelmstabError):
    code = "unsupported_dimension"


class BandViolation(HelmstabError):
    code = "band_violation"


class SymbolDegenerate(HelmstabError):
    code = "symbol_degenerate"


class ContractionViolated(HelmstabError):
    code = "contraction_violated"


class NoConvergence(HelmstabError):
    code = "no_convergence"


# born_fourier
class BasisMismatch(HelmstabError):
    code = "basis_mismatch"


class CutoffBelowBand(HelmstabError):
    code = "cutoff_below_band"


# reconstruct
class CoverageGap(HelmstabError):
    code = "coverage_gap"


class GapTooLarge(HelmstabError):
    code = "gap_too_large"


class FrequencyTooLow(HelmstabError):
    code = "frequency_too_low"


class MissingConstant(HelmstabError):
    code = "missing_constant"


def describe(exc: BaseException, mode: Optional[str] = None) -> Dict[str, Any]:
    """Flatten an exception into a manifest-friendly dict."""
    if isinstance(exc, HelmstabError):
        out = exc.to_dict()
    else:
        out = {"code": type(exc).__name__, "detail": str(exc)}
    if mode is not None:
        out["mode"] = mode
    return out
