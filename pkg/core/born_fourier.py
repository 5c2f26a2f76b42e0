"""Alessandrini pairing and Born-type extraction of Fourier samples of q1 - q2.

With u_l = exp(xi_l.(x - x0)/2)(1 + psi_l) solving the q_l equation,

    k^2 integral (q2 - q1) u1 u2 dx = <(Lambda_1 - Lambda_2) u1, u2>,

and u1 u2 = exp(-i r eta.(x - x0)) (1 + psi_1 + psi_2 + psi_1 psi_2). Dropping
the psi terms leaves F(q1 - q2)(r eta) = -(1/k^2) <...> exp(-i r eta.x0) up to
a remainder of size k^2 M / |zeta|.
"""
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import IO, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from utils.config import settings
from .cgo import build_xi_pair, cgo_remainder, cgo_trace
from .errors import BasisMismatch, CutoffBelowBand, HelmstabError
from .fields import difference, sample_fourier
from .forward_dn import boundary_project, dn_apply
from .models import FOURIER, Band, ConstantsLedger, DnMap, ExtractionMode, FourierSample, ScalarField

logger = logging.getLogger(__name__)


class DesignPoint(NamedTuple):
    r: float
    eta: np.ndarray
    band: Band
    certified: bool = True


def alessandrini_pair(
    dn1: DnMap,
    dn2: DnMap,
    u1_coeffs: np.ndarray,
    u2_coeffs: np.ndarray,
    k: float,
) -> complex:
    """(1/k^2) <(Lambda_1 - Lambda_2) u1, u2>, bilinear in the L2(boundary) mode metric."""
    if dn1.basis != dn2.basis:
        raise BasisMismatch("DN maps were assembled in different bases")
    basis = dn1.basis
    u1_coeffs = np.asarray(u1_coeffs)
    u2_coeffs = np.asarray(u2_coeffs)
    if u1_coeffs.shape != (basis.size,) or u2_coeffs.shape != (basis.size,):
        raise BasisMismatch(
            f"trace coefficients must have length {basis.size}",
            u1=list(u1_coeffs.shape),
            u2=list(u2_coeffs.shape),
        )
    delta = dn_apply(dn1, u1_coeffs) - dn_apply(dn2, u1_coeffs)
    return complex(np.sum(basis.norms_squared * delta * u2_coeffs) / k ** 2)


def default_band(r: float, k: float, ledger: ConstantsLedger) -> Band:
    """Low band up to a0 k^2 M (n = 3 only), high band beyond; a0 >= C1 leaves no gap."""
    if ledger.n == 3 and r <= ledger.low_band_limit(k):
        return Band.LOW
    return Band.HIGH


def error_budget(zeta_norm: float, k: float, ledger: ConstantsLedger) -> float:
    return ledger.C0 * k ** 2 * ledger.M / max(zeta_norm, ledger.eps0)


def fourier_bound(
    r: float,
    k: float,
    A_star: float,
    hms_norm: float,
    ledger: ConstantsLedger,
    band: Optional[Band] = None,
    C: Optional[float] = None,
) -> Tuple[float, float]:
    """A-priori bound on |F q~(r eta)| as (remainder part, Lipschitz part).

    Low band:  C C_chi / a0 ||q~||_H-s     + C/k^2 exp(C a0 k^2 M) A_star
    High band: C M k^2 C_chi / r ||q~||_H-s + C/k^2 exp(C r) A_star
    """
    band = default_band(r, k, ledger) if band is None else Band(band)
    C = ledger.C2 if C is None else C
    if band is Band.LOW:
        remainder = C * ledger.C_chi / ledger.a0 * hms_norm
        exponent = C * ledger.a0 * k ** 2 * ledger.M
    else:
        remainder = C * ledger.M * k ** 2 * ledger.C_chi / max(r, ledger.eps0) * hms_norm
        exponent = C * r
    lipschitz = C / k ** 2 * math.exp(min(exponent, 700.0)) * A_star
    return remainder, lipschitz


def extract_fourier_sample(
    dn1: DnMap,
    dn2: DnMap,
    r: float,
    eta: Sequence[float],
    k: float,
    ledger: ConstantsLedger,
    mode: ExtractionMode = ExtractionMode.BLIND,
    band: Optional[Band] = None,
    q1: Optional[ScalarField] = None,
    q2: Optional[ScalarField] = None,
    zeta_norm: Optional[float] = None,
    strict: bool = True,
    cgo_C1: Optional[float] = None,
) -> FourierSample:
    """Estimate F(q1 - q2)(r eta) from boundary data.

    Oracle mode builds psi_l from the true potentials; blind mode uses pure
    exponential traces; truth mode skips the boundary altogether and reads the
    transform of q1 - q2 (it isolates the truncation error downstream). q1 and
    q2, when given, also attach the truth value to the sample. ``cgo_C1`` is
    the calibrated contraction constant oracle traces are admitted with.
    """
    mode = ExtractionMode(mode)
    eta = np.asarray(eta, dtype=float)
    band = default_band(r, k, ledger) if band is None else Band(band)
    rho = r * eta
    truth = None
    if q1 is not None and q2 is not None:
        truth = sample_fourier(difference(q1, q2), rho)

    if mode is ExtractionMode.TRUTH:
        if truth is None:
            raise ValueError("truth extraction needs both potentials")
        return FourierSample(rho=rho, value=truth, band=band, zeta_norm=0.0, error_budget=0.0, certified=strict, truth=truth)

    xi1, xi2 = build_xi_pair(r, eta, band, k, ledger, zeta_norm=zeta_norm, strict=strict)
    grid = dn1.basis.grid
    if mode is ExtractionMode.ORACLE:
        if q1 is None or q2 is None:
            raise ValueError("oracle extraction needs both potentials")
        trace1 = cgo_trace(cgo_remainder(q1, k, xi1, ledger, C1=cgo_C1), xi1.xi, grid)
        trace2 = cgo_trace(cgo_remainder(q2, k, xi2, ledger, C1=cgo_C1), xi2.xi, grid)
    else:
        trace1 = cgo_trace(None, xi1.xi, grid)
        trace2 = cgo_trace(None, xi2.xi, grid)

    c1, tail1 = boundary_project(trace1, dn1.basis, max_tail=settings.CGO_TAIL_FRACTION)
    c2, tail2 = boundary_project(trace2, dn1.basis, max_tail=settings.CGO_TAIL_FRACTION)
    tail = max(tail1, tail2)
    if tail > settings.TAIL_FRACTION:
        logger.warning(f"CGO traces at r={r:.4g} lose {tail:.1%} of their boundary energy to the basis tail")
    pairing = alessandrini_pair(dn1, dn2, c1, c2, k)
    value = -pairing * np.exp(FOURIER.sign * 1j * float(rho @ grid.center))
    return FourierSample(
        rho=rho,
        value=complex(value),
        band=band,
        zeta_norm=xi1.zeta_norm,
        error_budget=error_budget(xi1.zeta_norm, k, ledger),
        certified=strict,
        truth=truth,
    )


# ---------------------------------------------------------------- design

def _circle_directions(count: int) -> List[np.ndarray]:
    angles = 2 * math.pi * np.arange(count) / count
    return [np.array([math.cos(t), math.sin(t)]) for t in angles]


def _sphere_directions(count: int) -> List[np.ndarray]:
    """Fibonacci points on the unit sphere."""
    golden = math.pi * (3.0 - math.sqrt(5.0))
    out = []
    for i in range(count):
        z = 1.0 - 2.0 * (i + 0.5) / count
        rad = math.sqrt(max(0.0, 1.0 - z * z))
        out.append(np.array([rad * math.cos(golden * i), rad * math.sin(golden * i), z]))
    return out


def _directions(dim: int, r: float, spacing: float) -> List[np.ndarray]:
    if r == 0:
        return [np.eye(dim)[0]]
    if dim == 2:
        return _circle_directions(max(1, math.ceil(2 * math.pi * r / spacing)))
    return _sphere_directions(max(1, math.ceil(4 * math.pi * r ** 2 / spacing ** 2)))


def _ladder(start: float, stop: float, spacing: float) -> np.ndarray:
    if stop <= start:
        return np.array([start])
    count = math.ceil((stop - start) / spacing)
    return start + (stop - start) * np.arange(count + 1) / count


def sample_design(
    T: float,
    k: float,
    ledger: ConstantsLedger,
    frequency_step: float,
    strict: bool = True,
    limit: Optional[float] = None,
) -> List[DesignPoint]:
    """Polar sampling of the ball |rho| <= T matched to a lattice of the given step.

    Radii are uniform with spacing at most step/2 and end exactly at T; each
    circle (sphere) carries directions spaced at most step/2 (step/4 on the
    sphere), so every lattice point lies within half a cell of a sample.
    In the plane the certified design starts at C1 k^2 M; ``strict=False``
    extends it down to the origin with uncertified samples.

    The band check applies to T itself; ``limit`` (the usable cutoff) only
    truncates the radial ladder.
    """
    low_limit = ledger.low_band_limit(k)
    if T < low_limit * (1 - 1e-12):
        raise CutoffBelowBand(f"T = {T:g} is below a0 k^2 M = {low_limit:g}", T=T, low_band_limit=low_limit)
    if ledger.a0 < ledger.C1:
        raise CutoffBelowBand("a0 < C1 leaves a band gap", a0=ledger.a0, C1=ledger.C1)
    if limit is not None and limit < T:
        logger.info(f"Sample design truncated from T={T:.4g} to {limit:.4g}")
        T = limit

    radial = frequency_step / 2
    angular = radial if ledger.n == 2 else frequency_step / 4
    start = ledger.high_band_start(k) if ledger.n == 2 and strict else 0.0
    design: List[DesignPoint] = []
    for r in _ladder(start, T, radial):
        r = float(r)
        band = default_band(r, k, ledger)
        certified = ledger.n == 3 or r >= ledger.high_band_start(k) * (1 - 1e-12)
        for eta in _directions(ledger.n, r, angular):
            design.append(DesignPoint(r=r, eta=eta, band=band, certified=certified))
    logger.debug(f"Sample design T={T:.4g} k={k:g}: {len(design)} points")
    return design


def coverage_gap(design: Sequence[DesignPoint], lattice: np.ndarray, T: float, cell: float) -> float:
    """Largest distance from a lattice frequency |rho| <= T to its nearest sample, in cells."""
    points = np.array([p.r * p.eta for p in design]) if design else np.zeros((0, lattice.shape[1]))
    inside = lattice[np.linalg.norm(lattice, axis=1) <= T]
    if inside.size == 0:
        return 0.0
    if points.size == 0:
        return math.inf
    worst = 0.0
    for chunk in np.array_split(inside, max(1, len(inside) // 512)):
        d = np.linalg.norm(chunk[:, None, :] - points[None, :, :], axis=2).min(axis=1)
        worst = max(worst, float(d.max()))
    return worst / cell


def extract_design(
    dn1: DnMap,
    dn2: DnMap,
    design: Iterable[DesignPoint],
    k: float,
    ledger: ConstantsLedger,
    mode: ExtractionMode = ExtractionMode.BLIND,
    q1: Optional[ScalarField] = None,
    q2: Optional[ScalarField] = None,
    cgo_C1: Optional[float] = None,
) -> Tuple[List[FourierSample], List[dict]]:
    """Extract every design point in parallel; failed points are reported, not raised."""
    design = list(design)

    def run(point: DesignPoint):
        try:
            return extract_fourier_sample(
                dn1, dn2, point.r, point.eta, k, ledger,
                mode=mode, band=point.band, q1=q1, q2=q2, strict=point.certified, cgo_C1=cgo_C1,
            )
        except HelmstabError as e:
            return e

    with ThreadPoolExecutor(max_workers=settings.HELMSTAB_THREADS) as pool:
        results = list(pool.map(run, design))

    samples, failures = [], []
    for point, result in zip(design, results):
        if isinstance(result, HelmstabError):
            logger.warning(f"Extraction failed at r={point.r:.4g}: {result}")
            failures.append({"r": point.r, "eta": point.eta.tolist(), **result.to_dict()})
        else:
            samples.append(result)
    return samples, failures


# ---------------------------------------------------------------- CSV

def sample_header(dim: int) -> List[str]:
    return (
        ["r"] + [f"eta_{i}" for i in range(dim)]
        + ["band", "zeta_norm", "re", "im", "error_budget", "truth_re", "truth_im", "certified"]
    )


def write_samples(samples: Iterable[FourierSample], stream: IO[str], dim: int) -> int:
    """Stream samples as CSV rows; returns the number written."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(sample_header(dim))
    count = 0
    for s in samples:
        eta = s.rho / s.r if s.r > 0 else np.eye(dim)[0]
        truth = ("", "") if s.truth is None else (f"{s.truth.real:.10e}", f"{s.truth.imag:.10e}")
        writer.writerow(
            [f"{s.r:.10e}"]
            + [f"{e:.10e}" for e in eta]
            + [s.band.value, f"{s.zeta_norm:.10e}", f"{s.value.real:.10e}", f"{s.value.imag:.10e}", f"{s.error_budget:.10e}"]
            + list(truth)
            + [str(int(s.certified))]
        )
        count += 1
    return count
