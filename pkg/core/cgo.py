"""Complex frequencies and CGO solutions u = exp(xi.(x - x0)/2) (1 + psi).

psi is the fixed point of psi <- G_xi(-k^2 q (1 + psi)), G_xi being the
Fourier-multiplier inverse of the central-difference Delta + xi.grad on the
padded box. The lattice may carry a Bloch shift theta (w = exp(i theta.x) v,
v periodic) chosen to keep the symbol away from zero; modes that still
fall inside the shell |symbol| < tau |xi| are clamped to that magnitude.
"""
import itertools
import logging
import math
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from utils.config import settings
from .errors import (
    BandViolation,
    ContractionViolated,
    NoConvergence,
    SymbolDegenerate,
    UnsupportedDimension,
)
from .fields import frequency_lattice, hs_norm, l2_norm, omega_l2_norm
from .forward_dn import interior_laplacian
from .models import Band, CgoSolution, CgoVector, ConstantsLedger, GridSpec, ScalarField

logger = logging.getLogger(__name__)

Shift = Union[None, str, Sequence[float]]


# ---------------------------------------------------------------- frequencies

def _seed_axis(eta: np.ndarray) -> np.ndarray:
    """Standard basis vector least aligned with eta (lowest index on ties)."""
    e = np.zeros(eta.size)
    e[int(np.argmin(np.abs(eta)))] = 1.0
    return e


def _orthonormal_pair(eta: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Unit vectors completing eta to an orthonormal frame (second is None in the plane)."""
    if eta.size == 2:
        return np.array([-eta[1], eta[0]]), None
    seed = _seed_axis(eta)
    u = seed - (seed @ eta) * eta
    u /= np.linalg.norm(u)
    w = np.cross(eta, u)
    w /= np.linalg.norm(w)
    return u, w


def build_xi_pair(
    r: float,
    eta: Sequence[float],
    band: Union[Band, str],
    k: float,
    ledger: ConstantsLedger,
    M: Optional[float] = None,
    zeta_norm: Optional[float] = None,
    strict: bool = True,
) -> Tuple[CgoVector, CgoVector]:
    """xi_1 = zeta + i alpha - i r eta, xi_2 = -zeta - i alpha - i r eta.

    Low band: |zeta| = a0 k^2 M (or ``zeta_norm`` for ladder studies) with
    alpha completing the orthogonal triple. High band: alpha = 0, |zeta| = r.
    ``strict=False`` skips the band validity ranges (uncertified samples).
    """
    band = Band(band)
    eta = np.asarray(eta, dtype=float)
    if abs(np.linalg.norm(eta) - 1.0) > 1e-12:
        raise ValueError(f"eta must be a unit vector, |eta| = {np.linalg.norm(eta)}")
    if r < 0:
        raise ValueError(f"radius must be nonnegative, got {r}")
    M = ledger.M if M is None else M
    n = eta.size
    u, w = _orthonormal_pair(eta)

    if band is Band.LOW:
        if n == 2:
            raise UnsupportedDimension("low band needs an orthogonal triple, impossible in the plane", band="low")
        limit = ledger.a0 * k ** 2 * M
        if strict and r > limit * (1 + 1e-12):
            raise BandViolation(f"r = {r:g} exceeds the low-band limit a0 k^2 M = {limit:g}", r=r, limit=limit)
        z = limit if zeta_norm is None else float(zeta_norm)
        if z < r:
            raise BandViolation(f"|zeta| = {z:g} must be at least r = {r:g}", r=r, zeta_norm=z)
        zeta = z * u
        alpha = math.sqrt(max(z ** 2 - r ** 2, 0.0)) * w
    else:
        start = ledger.C1 * k ** 2 * M
        if strict and r < start * (1 - 1e-12):
            raise BandViolation(f"r = {r:g} is below the high-band start C1 k^2 M = {start:g}", r=r, start=start)
        if zeta_norm is None or n == 2:
            if zeta_norm is not None and abs(zeta_norm - r) > 1e-12 * max(r, 1.0):
                raise UnsupportedDimension("|zeta| is pinned to r in the plane", band="high")
            zeta = r * u
            alpha = np.zeros(n)
        else:
            z = float(zeta_norm)
            if z < r:
                raise BandViolation(f"|zeta| = {z:g} must be at least r = {r:g}", r=r, zeta_norm=z)
            zeta = z * u
            alpha = math.sqrt(z ** 2 - r ** 2) * w

    xi1 = zeta + 1j * alpha - 1j * r * eta
    xi2 = -zeta - 1j * alpha - 1j * r * eta
    return (
        CgoVector(xi=xi1, zeta=zeta, alpha=alpha, r=float(r), eta=eta, sign=1),
        CgoVector(xi=xi2, zeta=-zeta, alpha=-alpha, r=float(r), eta=eta, sign=2),
    )


def free_xi(zeta: Sequence[float], imag: Sequence[float]) -> CgoVector:
    """Wrap an arbitrary null vector zeta + i*imag (|zeta| = |imag|, zeta . imag = 0)."""
    zeta = np.asarray(zeta, dtype=float)
    imag = np.asarray(imag, dtype=float)
    return CgoVector(xi=zeta + 1j * imag, zeta=zeta, alpha=imag, r=0.0, eta=np.eye(zeta.size)[0])


# ---------------------------------------------------------------- Faddeev solver

def _symbol(grid: GridSpec, xi: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Central-difference symbol of Delta + xi.grad at kappa = rho + theta.

    The same stencils as the forward solver, so psi solves the discrete
    equation that stencil_residual applies node by node.
    """
    comps, _ = frequency_lattice(grid)
    h = grid.h
    kappa = [c + t for c, t in zip(comps, shift)]
    laplacian = -sum((2.0 / h * np.sin(0.5 * c * h)) ** 2 for c in kappa)
    gradient = sum(x * np.sin(c * h) / h for x, c in zip(xi, kappa))
    return laplacian + 1j * gradient


def choose_shift(grid: GridSpec, xi: np.ndarray) -> np.ndarray:
    """Half-cell Bloch shift maximizing the smallest symbol modulus on the lattice."""
    half = grid.frequency_step / 2
    best, best_min = np.zeros(grid.dim), -1.0
    for candidate in itertools.product((0.0, half), repeat=grid.dim):
        theta = np.asarray(candidate)
        smallest = float(np.min(np.abs(_symbol(grid, xi, theta))))
        if smallest > best_min + 1e-12:
            best, best_min = theta, smallest
    return best


def _resolve_shift(grid: GridSpec, xi: np.ndarray, shift: Shift) -> np.ndarray:
    if shift is None:
        return np.zeros(grid.dim)
    if isinstance(shift, str):
        if shift != "auto":
            raise ValueError(f"unknown shift rule {shift!r}")
        return choose_shift(grid, xi)
    return np.asarray(shift, dtype=float)


def _regularized_symbol(grid: GridSpec, xi: np.ndarray, theta: np.ndarray, tau: float, max_shell: float) -> np.ndarray:
    symbol = _symbol(grid, xi, theta)
    floor = tau * float(np.linalg.norm(xi))
    modulus = np.abs(symbol)
    shell = modulus < floor
    fraction = float(np.mean(shell))
    if fraction > max_shell:
        raise SymbolDegenerate(
            f"{fraction:.2%} of lattice modes fall inside the regularization shell",
            fraction=fraction,
        )
    if shell.any():
        phase = np.where(modulus > 0, symbol / np.where(modulus > 0, modulus, 1.0), 1.0)
        symbol = np.where(shell, floor * phase, symbol)
    return symbol


def _bloch(grid: GridSpec, theta: np.ndarray, sign: int) -> np.ndarray:
    if not np.any(theta):
        return np.ones(grid.shape)
    coords = grid.coordinates()
    return np.exp(sign * 1j * sum(t * x for t, x in zip(theta, coords)))


def faddeev_solve(
    xi: Union[CgoVector, np.ndarray],
    f: ScalarField,
    shift: Shift = None,
    eps0: float = 1.0,
    tau: Optional[float] = None,
    max_shell: Optional[float] = None,
) -> ScalarField:
    """Solve Delta w + xi.grad w = f on the padded box by a Fourier multiplier."""
    xi_vec = xi.xi if isinstance(xi, CgoVector) else np.asarray(xi, dtype=complex)
    if np.linalg.norm(xi_vec) < eps0:
        raise ContractionViolated(f"|xi| = {np.linalg.norm(xi_vec):.3g} is below eps0 = {eps0:g}")
    grid = f.grid
    theta = _resolve_shift(grid, xi_vec, shift)
    symbol = _regularized_symbol(
        grid,
        xi_vec,
        theta,
        settings.SYMBOL_TAU if tau is None else tau,
        settings.SYMBOL_SHELL_FRACTION if max_shell is None else max_shell,
    )
    return f.with_values(_apply_inverse(f.values, symbol, _bloch(grid, theta, 1)), support_flag=False, label="w")


def _apply_inverse(values: np.ndarray, symbol: np.ndarray, bloch: np.ndarray) -> np.ndarray:
    return bloch * np.fft.ifftn(np.fft.fftn(values * np.conj(bloch)) / symbol)


def _apply_symbol(values: np.ndarray, symbol: np.ndarray, bloch: np.ndarray) -> np.ndarray:
    return bloch * np.fft.ifftn(np.fft.fftn(values * np.conj(bloch)) * symbol)


# ---------------------------------------------------------------- CGO remainder

def cgo_remainder(
    q: ScalarField,
    k: float,
    xi: CgoVector,
    ledger: ConstantsLedger,
    q_norm: Optional[float] = None,
    shift: Shift = "auto",
    check_admissible: bool = True,
    C1: Optional[float] = None,
) -> CgoSolution:
    """Fixed-point construction of psi with Delta psi + xi.grad psi + k^2 q psi = -k^2 q.

    ``C1`` replaces the ledger constant in the admissibility check (a value
    from calibrate_c1, say).
    """
    grid = q.grid
    origin = grid.center
    q_norm = hs_norm(q, ledger.s) if q_norm is None else q_norm
    required = (ledger.C1 if C1 is None else C1) * k ** 2 * q_norm
    if check_admissible and xi.norm < required:
        raise ContractionViolated(
            f"|xi| = {xi.norm:.4g} below C1 k^2 ||q||_Hs = {required:.4g}",
            xi_norm=xi.norm,
            required=required,
        )
    if xi.norm < ledger.eps0:
        raise ContractionViolated(f"|xi| = {xi.norm:.3g} is below eps0 = {ledger.eps0:g}")

    theta = _resolve_shift(grid, xi.xi, shift)
    if not np.any(q.values):
        zero = q.with_values(np.zeros(grid.shape), support_flag=False, label="psi")
        return CgoSolution(psi=zero, xi=xi, k=float(k), residual_norm=0.0, iterations=0, shift=theta, origin=origin)

    symbol = _regularized_symbol(grid, xi.xi, theta, settings.SYMBOL_TAU, settings.SYMBOL_SHELL_FRACTION)
    bloch = _bloch(grid, theta, 1)
    kq = k ** 2 * np.asarray(q.values)
    psi = np.zeros(grid.shape, dtype=complex)
    volume = grid.h ** grid.dim
    update = math.inf
    iterations = 0
    for iterations in range(1, settings.FIXED_POINT_MAX_ITER + 1):
        nxt = _apply_inverse(-kq * (1.0 + psi), symbol, bloch)
        update = float(np.sqrt(volume * np.sum(np.abs(nxt - psi) ** 2)))
        psi = nxt
        if not math.isfinite(update) or update > 1e12:
            break
        if update < settings.FIXED_POINT_TOL:
            break
    if not (math.isfinite(update) and update < settings.FIXED_POINT_TOL):
        raise NoConvergence(
            f"fixed point stalled after {iterations} iterations (last update {update:.3e}) at |xi| = {xi.norm:.4g}",
            xi_norm=xi.norm,
            k=k,
            iterations=iterations,
        )

    exact = _symbol(grid, xi.xi, theta)
    residual = _apply_symbol(psi, exact, bloch) + kq * (1.0 + psi)
    inner = (slice(1, grid.points_per_axis - 1),) * grid.dim
    residual_norm = omega_l2_norm(residual[inner], grid.h)
    logger.debug(f"CGO |xi|={xi.norm:.4g} k={k:g}: {iterations} iterations, residual {residual_norm:.3e}")
    return CgoSolution(
        psi=q.with_values(psi, support_flag=False, label="psi"),
        xi=xi,
        k=float(k),
        residual_norm=residual_norm,
        iterations=iterations,
        shift=theta,
        origin=origin,
    )


def residual_certificate(solution: CgoSolution, q: ScalarField) -> float:
    """residual_norm / (k^2 ||q (1 + psi)||_L2(Omega))."""
    grid = q.grid
    scale = solution.k ** 2 * omega_l2_norm(np.asarray(q.omega_values) * (1.0 + solution.psi.omega_values), grid.h)
    return 0.0 if scale == 0 else solution.residual_norm / scale


def _exponential(xi: np.ndarray, points: np.ndarray, origin: np.ndarray) -> np.ndarray:
    return np.exp(0.5 * (points - origin) @ xi)


def cgo_solution(q: ScalarField, k: float, xi: CgoVector, ledger: ConstantsLedger, **kwargs) -> Tuple[ScalarField, CgoSolution]:
    """u on the Omega grid (embedded in the padded lattice) plus the remainder it came from."""
    solution = cgo_remainder(q, k, xi, ledger, **kwargs)
    return cgo_field(solution), solution


def cgo_field(solution: CgoSolution) -> ScalarField:
    grid = solution.psi.grid
    coords = np.stack([c.ravel() for c in grid.coordinates(omega_only=True)], axis=1)
    exp_part = _exponential(solution.xi.xi, coords, solution.origin).reshape(grid.omega_shape)
    values = np.zeros(grid.shape, dtype=complex)
    values[grid.omega_slice] = exp_part * (1.0 + solution.psi.omega_values)
    return solution.psi.with_values(values, support_flag=False, label="u")


def pde_residual(solution: CgoSolution, q: ScalarField) -> float:
    """Relative residual of (Delta + k^2 q) u on interior nodes, spectral in psi."""
    grid = q.grid
    xi = solution.xi.xi
    psi = np.asarray(solution.psi.values)
    kq = solution.k ** 2 * np.asarray(q.values)
    # Delta(e^{xi.x/2} phi) = e^{xi.x/2} (Delta phi + xi.grad phi + (xi.xi/4) phi)
    reduced = _apply_symbol(psi, _symbol(grid, xi, solution.shift), _bloch(grid, solution.shift, 1))
    reduced = reduced + (kq + 0.25 * complex(xi @ xi)) * (1.0 + psi)
    coords = np.stack([c.ravel() for c in grid.coordinates(omega_only=True)], axis=1)
    exp_part = _exponential(xi, coords, solution.origin).reshape(grid.omega_shape)
    u = exp_part * (1.0 + solution.psi.omega_values)
    inner = (slice(1, grid.points_per_axis - 1),) * grid.dim
    num = omega_l2_norm((exp_part * reduced[grid.omega_slice])[inner], grid.h)
    den = omega_l2_norm((kq[grid.omega_slice] * u)[inner], grid.h)
    return 0.0 if den == 0 else num / den


def stencil_residual(solution: CgoSolution, q: ScalarField) -> float:
    """Relative residual of Delta psi + xi.grad psi + k^2 q (1 + psi) by central differences.

    Evaluated on interior nodes of Omega with the five-point (seven-point)
    Laplacian; no lattice symbol is involved.
    """
    grid = q.grid
    h = grid.h
    psi = np.asarray(solution.psi.omega_values)
    core = (slice(1, -1),) * grid.dim
    source = solution.k ** 2 * np.asarray(q.omega_values)[core] * (1.0 + psi[core])
    residual = interior_laplacian(psi, h) + source
    for a, x in enumerate(solution.xi.xi):
        ahead, behind = list(core), list(core)
        ahead[a], behind[a] = slice(2, None), slice(None, -2)
        residual = residual + x * (psi[tuple(ahead)] - psi[tuple(behind)]) / (2 * h)
    scale = omega_l2_norm(source, h)
    return 0.0 if scale == 0 else omega_l2_norm(residual, h) / scale


def cgo_trace(solution: Optional[CgoSolution], xi: np.ndarray, grid: GridSpec, origin: Optional[np.ndarray] = None):
    """Boundary evaluator for boundary_project.

    With a solution the trace is exp(xi.(x - x0)/2)(1 + psi) with psi read at the
    lattice node; without one it is the pure exponential (blind traces).
    """
    origin = grid.center if origin is None else origin

    def evaluate(points: np.ndarray) -> np.ndarray:
        values = _exponential(xi, points, origin)
        if solution is None:
            return values
        index = np.rint(points / grid.h).astype(int)
        if np.max(np.abs(index * grid.h - points)) > 1e-9:
            raise ValueError("CGO traces are evaluated on lattice nodes only")
        psi = np.asarray(solution.psi.values)[tuple(index.T)]
        return values * (1.0 + psi)

    return evaluate


def diagnostic_record(solution: CgoSolution, s: float, q: Optional[ScalarField] = None) -> Dict[str, object]:
    record = {
        "xi": solution.xi.as_dict(),
        "k": solution.k,
        "iterations": solution.iterations,
        "residual_norm": solution.residual_norm,
        "psi_l2": l2_norm(solution.psi),
        "psi_hs": hs_norm(solution.psi, s),
    }
    if q is not None:
        record["stencil_residual"] = stencil_residual(solution, q)
    return record


# ---------------------------------------------------------------- calibration

def contracts(q: ScalarField, k: float, C1: float, ledger: ConstantsLedger, q_norm: Optional[float] = None) -> bool:
    """Does the fixed point converge at |xi| = C1 k^2 ||q||_Hs (high-band xi along e_1)?"""
    q_norm = hs_norm(q, ledger.s) if q_norm is None else q_norm
    xi_norm = max(C1 * k ** 2 * q_norm, ledger.eps0)
    eta = np.eye(q.grid.dim)[0]
    # high-band pairs have |xi| = r sqrt(2); rounded up so the rebuilt |xi| stays >= eps0
    xi1, _ = build_xi_pair(xi_norm / math.sqrt(2) * (1 + 1e-12), eta, Band.HIGH, k, ledger, strict=False)
    try:
        cgo_remainder(q, k, xi1, ledger, q_norm=q_norm, check_admissible=False)
    except (NoConvergence, SymbolDegenerate, ContractionViolated):
        return False
    return True


def calibrate_c1(
    potentials: Iterable[ScalarField],
    k: float,
    ledger: ConstantsLedger,
    lower: float = 1e-6,
    upper: Optional[float] = None,
    steps: int = 30,
) -> float:
    """Smallest C1 (bisection in log scale) for which every potential contracts."""
    worst = 0.0
    for q in potentials:
        q_norm = hs_norm(q, ledger.s)
        if q_norm == 0:
            continue
        hi = ledger.C1 if upper is None else upper
        while not contracts(q, k, hi, ledger, q_norm):
            hi *= 2
            if hi > 1e6:
                raise NoConvergence(f"no contracting C1 found for {q.label}", label=q.label)
        lo = lower
        if contracts(q, k, lo, ledger, q_norm):
            worst = max(worst, lo)
            continue
        for _ in range(steps):
            mid = math.sqrt(lo * hi)
            if contracts(q, k, mid, ledger, q_norm):
                hi = mid
            else:
                lo = mid
        logger.info(f"Calibrated C1 for {q.label}: {hi:.4g}")
        worst = max(worst, hi)
    return worst
