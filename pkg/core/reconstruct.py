"""Truncated Fourier inversion, the cutoff rule and the two-term stability bound."""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from utils.config import settings
from .errors import CoverageGap, FrequencyTooLow, GapTooLarge, MissingConstant
from .fields import frequency_lattice, inverse_lattice_transform, l2_norm, lattice_transform, sobolev_norm, sobolev_weights
from .models import FOURIER, ConstantsLedger, ExtractionMode, FourierSample, GridSpec, Regime, ScalarField, StabilityRecord

logger = logging.getLogger(__name__)

GAP_LIMIT = 1.0 / math.e


def choose_cutoff(A_star: float, k: float, ledger: ConstantsLedger) -> Tuple[float, Regime]:
    """T = p log(1/A) when a k^2 <= p log(1/A), else T = a k^2 (A = A_star^2).

    A_star = 0 gives T = inf in the small regime.
    """
    if A_star > GAP_LIMIT:
        raise GapTooLarge(f"A_star = {A_star:.4g} exceeds 1/e", A_star=A_star)
    if A_star < 0:
        raise ValueError(f"A_star must be nonnegative, got {A_star}")
    if not ledger.k_admissible(k):
        raise FrequencyTooLow(f"k^2 = {k ** 2:.4g} is below 1/(C1 M) = {1.0 / (ledger.C1 * ledger.M):.4g}", k=k)
    log_inv = math.inf if A_star == 0 else -2.0 * math.log(A_star)
    small = ledger.p * log_inv
    large = ledger.a * k ** 2
    if large <= small:
        return small, Regime.SMALL
    return large, Regime.LARGE


def usable_cutoff(T: float, grid: GridSpec, mode: ExtractionMode = ExtractionMode.BLIND) -> float:
    """The cutoff actually applied: T capped by the lattice Nyquist frequency.

    Boundary-data modes are further capped at MAX_RADIUS, past which the
    exponential traces overflow the pairing.
    """
    cap = grid.nyquist
    if ExtractionMode(mode) is not ExtractionMode.TRUTH:
        cap = min(cap, settings.MAX_RADIUS)
    return min(T, cap)


def invert_truncated(
    samples: Sequence[FourierSample],
    T: float,
    grid: GridSpec,
    restrict: bool = True,
    origin: Optional[np.ndarray] = None,
) -> ScalarField:
    """Nearest-sample gridding onto the padded lattice, zero beyond |rho| > T, inverse transform.

    Samples are gridded with the plane wave at ``origin`` (default: the centre
    of Omega) factored out and restored at the lattice frequency, so only the
    envelope is held constant across a cell. With ``restrict`` the result is
    cut back to Omega (zero outside); inside Omega nothing is truncated.
    """
    origin = grid.center if origin is None else np.asarray(origin, dtype=float)
    comps, modulus = frequency_lattice(grid)
    mask = modulus <= T if T > 0 else np.zeros(modulus.shape, dtype=bool)
    spectrum = np.zeros(grid.shape, dtype=complex)
    if mask.any():
        if not samples:
            raise CoverageGap(f"no samples for {int(mask.sum())} lattice frequencies below T = {T:.4g}", T=T)
        lattice = np.stack([c[mask] for c in comps], axis=1)
        points = np.array([s.rho for s in samples])
        values = np.array([s.value for s in samples]) * np.exp(-FOURIER.sign * 1j * (points @ origin))
        distance, index = cKDTree(points).query(lattice)
        half_cell = 0.5 * grid.frequency_step
        worst = float(np.max(distance))
        if worst > half_cell * (1 + 1e-9):
            raise CoverageGap(
                f"lattice frequency {lattice[int(np.argmax(distance))].tolist()} is {worst / grid.frequency_step:.3f} "
                f"cells from the nearest sample",
                T=T,
                distance_cells=worst / grid.frequency_step,
            )
        spectrum[mask] = values[index] * np.exp(FOURIER.sign * 1j * (lattice @ origin))
    values = inverse_lattice_transform(grid, spectrum)
    if restrict:
        out = np.zeros(grid.shape, dtype=complex)
        out[grid.omega_slice] = values[grid.omega_slice]
        return ScalarField(grid=grid, values=out, support_flag=True, label=f"q_rec[T={T:.4g}]")
    return ScalarField(grid=grid, values=values, support_flag=False, label=f"q_rec[T={T:.4g}]")


def truth_samples(field: ScalarField, T: float) -> List[FourierSample]:
    """Exact lattice samples of a field for every frequency |rho| <= T."""
    comps, modulus = frequency_lattice(field.grid)
    spectrum = lattice_transform(field)
    mask = modulus <= T
    out = []
    for idx in zip(*np.nonzero(mask)):
        rho = np.array([c[idx] for c in comps])
        value = complex(spectrum[idx])
        out.append(FourierSample(rho=rho, value=value, band="high", zeta_norm=0.0, error_budget=0.0, truth=value))
    return out


def tail_norm(field: ScalarField, T: float, s: float) -> float:
    """(sum over |rho| > T of (1+|rho|^2)^-s |F f|^2 / L^n)^(1/2)."""
    grid = field.grid
    _, modulus = frequency_lattice(grid)
    weights = sobolev_weights(grid, -s)
    spectrum = lattice_transform(field)
    tail = modulus > T
    return float(np.sqrt(np.sum(weights[tail] * np.abs(spectrum[tail]) ** 2) / grid.box_side ** grid.dim))


def bound_rhs(A_star: float, k: float, ledger: ConstantsLedger, C: Optional[float] = None) -> Tuple[float, float]:
    """(C/k^2) exp(C k^2) A_star and C (k^2 + log(1/A_star))^-m."""
    C = ledger.fitted_C if C is None else C
    if C is None:
        raise MissingConstant("no fitted constant in the ledger and none supplied")
    if A_star == 0:
        return 0.0, 0.0
    try:
        growth = math.exp(C * k ** 2)
    except OverflowError:
        growth = math.inf
    lipschitz = C / k ** 2 * growth * A_star
    log_term = C * (k ** 2 + math.log(1.0 / A_star)) ** (-ledger.m)
    return lipschitz, log_term


def error_report(q_rec: ScalarField, q_true_diff: ScalarField, ledger: ConstantsLedger) -> Dict[str, float]:
    if q_rec.grid != q_true_diff.grid:
        raise ValueError("reconstruction and truth live on different grids")
    err = q_rec.with_values(np.asarray(q_rec.values) - np.asarray(q_true_diff.values), support_flag=False, label="error")
    return {"err_hms": sobolev_norm(err, -ledger.s), "err_l2": l2_norm(err)}


# ---------------------------------------------------------------- proof bookkeeping

def phi(T: float, A: float, k: float, ledger: ConstantsLedger) -> float:
    """exp(C4 T) A / k^4 + M^2 T^-2m, the quantity the cutoff balances."""
    return math.exp(ledger.C4 * T) * A / k ** 4 + ledger.M ** 2 * T ** (-2 * ledger.m)


def derive_c5(ledger: ConstantsLedger) -> float:
    m, p, a = ledger.m, ledger.p, ledger.a
    return max(ledger.C1 ** 2 * (4 * m / math.e) ** (2 * m), p ** (-2 * m)) * ledger.M ** 2 * (1 + p / a) ** (2 * m)


def derive_c6(ledger: ConstantsLedger) -> float:
    return (1 + ledger.a / ledger.p) ** (2 * ledger.m)


def bound_holds(record: StabilityRecord, ledger: ConstantsLedger, C: float) -> bool:
    lipschitz, log_term = bound_rhs(record.A_star, record.k, ledger, C)
    return record.err_hms <= lipschitz + log_term


def fit_constant(
    records: Sequence[StabilityRecord],
    ledger: ConstantsLedger,
    lower: float = 1e-12,
    upper: float = 1e12,
    steps: int = 200,
) -> Tuple[Optional[float], List[StabilityRecord], List[StabilityRecord]]:
    """Fit C on the even-indexed rows, return (C, holdout rows, violating holdout rows).

    The right-hand side grows with C, so the smallest C covering every fit row
    is found by bisection in log scale. Rows with A_star = 0 carry no bound and
    are skipped.
    """
    usable = [r for r in records if r.A_star > 0 and r.flagged is None]
    fit, holdout = usable[0::2], usable[1::2]
    if not fit:
        return None, holdout, []
    if not all(bound_holds(r, ledger, upper) for r in fit):
        raise MissingConstant(f"no constant below {upper:g} covers the fit rows")
    lo, hi = math.log(lower), math.log(upper)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if all(bound_holds(r, ledger, math.exp(mid)) for r in fit):
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-9:
            break
    C = math.exp(hi)
    violations = [r for r in holdout if not bound_holds(r, ledger, C)]
    logger.info(f"Fitted C = {C:.4g} on {len(fit)} rows; {len(violations)} of {len(holdout)} holdout rows violate the bound")
    return C, holdout, violations
