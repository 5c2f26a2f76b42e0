"""Forward Helmholtz solves and the Dirichlet-to-Neumann map on the unit box.

The operator is the centered second-order stencil for Delta + k^2 q on the
interior nodes of Omega. Normal derivatives use a one-sided second-order flux
in which the second normal derivative at the boundary node is replaced through
the equation by -(tangential Laplacian + k^2 q) u.
"""
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from utils.config import settings
from .errors import BasisMismatch, NearSingular, ResonantMode, SolveFailure, TailTooLarge
from .models import BoundaryBasis, DnMap, GridSpec, ScalarField

logger = logging.getLogger(__name__)

Trace = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


# ---------------------------------------------------------------- basis

def make_basis(grid: GridSpec, modes_per_face: int) -> BoundaryBasis:
    """Per-face tensor sine modes, multi-indices 1..modes_per_face per tangential axis."""
    if modes_per_face < 1 or modes_per_face > grid.points_per_axis - 2:
        raise ValueError(f"modes_per_face must be in [1, {grid.points_per_axis - 2}], got {modes_per_face}")
    faces = tuple((axis, side) for axis in range(grid.dim) for side in (0, 1))
    per_face = list(itertools.product(range(1, modes_per_face + 1), repeat=grid.dim - 1))
    entries = tuple((f, m) for f in range(len(faces)) for m in per_face)
    return BoundaryBasis(grid=grid, modes_per_face=modes_per_face, faces=faces, entries=entries)


def _sine_table(grid: GridSpec, modes: int) -> np.ndarray:
    m = np.arange(1, modes + 1)[:, None]
    return np.sin(math.pi * m * grid.omega_axis()[None, :])


def _face_index(grid: GridSpec, face: Tuple[int, int]) -> Tuple[Union[int, slice], ...]:
    axis, side = face
    index: list = [slice(None)] * grid.dim
    index[axis] = 0 if side == 0 else grid.points_per_axis - 1
    return tuple(index)


def _face_points(grid: GridSpec, face: Tuple[int, int]) -> np.ndarray:
    """Coordinates of the face lattice, shape (N^(n-1), n), tangential axes in order."""
    axis, side = face
    t = grid.omega_axis()
    tangential = np.meshgrid(*([t] * (grid.dim - 1)), indexing="ij")
    cols = []
    it = iter(tangential)
    for a in range(grid.dim):
        cols.append(np.full(tangential[0].shape, float(side)) if a == axis else next(it))
    return np.stack([c.ravel() for c in cols], axis=1)


def _project_face(values: np.ndarray, table: np.ndarray, h: float) -> np.ndarray:
    """Sine-series coefficients of one face array (discrete orthogonality is exact)."""
    n_tan = values.ndim
    scale = (2.0 * h) ** n_tan
    if n_tan == 1:
        coeffs = table @ values
    else:
        coeffs = table @ values @ table.T
    return scale * coeffs.ravel()


def _synthesize_face(coeffs: np.ndarray, table: np.ndarray, n_tan: int) -> np.ndarray:
    modes = table.shape[0]
    if n_tan == 1:
        return table.T @ coeffs
    return table.T @ coeffs.reshape(modes, modes) @ table


def _face_energy(values: np.ndarray, h: float) -> float:
    w = np.full(values.shape[0], h)
    w[[0, -1]] *= 0.5
    weights = w
    for _ in range(values.ndim - 1):
        weights = np.multiply.outer(weights, w)
    return float(np.sum(weights * np.abs(values) ** 2))


def trace_from_coefficients(coeffs: np.ndarray, basis: BoundaryBasis) -> np.ndarray:
    """Omega array holding the synthesized Dirichlet data on boundary nodes, zero inside."""
    grid = basis.grid
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (basis.size,):
        raise ValueError(f"coefficient vector must have length {basis.size}, got {coeffs.shape}")
    table = _sine_table(grid, basis.modes_per_face)
    per_face = basis.modes_per_face ** (grid.dim - 1)
    u = np.zeros(grid.omega_shape, dtype=complex)
    for f, face in enumerate(basis.faces):
        block = coeffs[f * per_face:(f + 1) * per_face]
        u[_face_index(grid, face)] += _synthesize_face(block, table, grid.dim - 1)
    return u


def boundary_project(
    trace: Trace,
    basis: BoundaryBasis,
    max_tail: Optional[float] = None,
) -> Tuple[np.ndarray, float]:
    """L2(face) projection of a boundary trace onto the basis.

    ``trace`` is either an Omega array (boundary nodes are read) or a callable
    evaluated on each face lattice. Returns (coefficients, tail fraction), the
    tail being the share of boundary energy the basis cannot represent.
    """
    grid = basis.grid
    max_tail = settings.TAIL_FRACTION if max_tail is None else max_tail
    table = _sine_table(grid, basis.modes_per_face)
    shape = (grid.points_per_axis,) * (grid.dim - 1)
    coeffs = []
    total = 0.0
    for face in basis.faces:
        if callable(trace):
            values = np.asarray(trace(_face_points(grid, face))).reshape(shape)
        else:
            values = np.asarray(trace)[_face_index(grid, face)]
        coeffs.append(_project_face(values, table, grid.h))
        total += _face_energy(values, grid.h)
    coeffs = np.concatenate(coeffs)
    represented = float(np.sum(basis.norms_squared * np.abs(coeffs) ** 2))
    tail = 0.0 if total == 0 else max(0.0, 1.0 - represented / total)
    if tail > max_tail:
        raise TailTooLarge(
            f"{tail:.1%} of the boundary energy lies outside {basis.modes_per_face} modes per face",
            tail=tail,
            modes_per_face=basis.modes_per_face,
        )
    return coeffs, tail


# ---------------------------------------------------------------- operator

def _second_difference(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="csr") / h ** 2


def _interior(grid: GridSpec) -> Tuple[slice, ...]:
    return (slice(1, grid.points_per_axis - 1),) * grid.dim


def interior_laplacian(u: np.ndarray, h: float) -> np.ndarray:
    """Five/seven-point Laplacian of an Omega array, evaluated on interior nodes."""
    core = (slice(1, -1),) * u.ndim
    out = -2 * u.ndim * u[core]
    for a in range(u.ndim):
        for shift in (slice(2, None), slice(None, -2)):
            index = list(core)
            index[a] = shift
            out = out + u[tuple(index)]
    return out / h ** 2


class HelmholtzOperator:
    """Discrete Delta + k^2 q on interior nodes, factored or preconditioned once.

    Shared read-only by every column of a DN assembly.
    """

    def __init__(self, q: ScalarField, k: float, method: Optional[str] = None):
        if k <= 0:
            raise ValueError(f"frequency must be positive, got {k}")
        if not q.is_real:
            raise ValueError("refractive index must be real-valued")
        self.grid = q.grid
        self.k = float(k)
        self.q_omega = np.real(q.omega_values)
        grid = self.grid
        n_int = grid.points_per_axis - 2
        d2 = _second_difference(n_int, grid.h)
        eye = sp.identity(n_int, format="csr")
        lap = None
        for a in range(grid.dim):
            factors = [d2 if b == a else eye for b in range(grid.dim)]
            term = factors[0]
            for f in factors[1:]:
                term = sp.kron(term, f, format="csr")
            lap = term if lap is None else lap + term
        potential = self.k ** 2 * self.q_omega[_interior(grid)].ravel()
        self.matrix = (lap + sp.diags(potential)).tocsc()
        if method is None:
            direct = grid.dim == 2 and grid.points_per_axis <= settings.DIRECT_SOLVER_MAX_N
            method = "direct" if direct else "iterative"
        self.method = method
        self._lu = None
        if method == "direct":
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as e:
                raise NearSingular(f"operator is exactly singular at k={self.k:g}: {e}", k=self.k) from e
        self._jacobi = sp.diags(1.0 / self.matrix.diagonal()) if method == "iterative" else None
        self.smallest_eigenvalue, self.condition_estimate = self._conditioning()
        logger.debug(
            f"Helmholtz operator k={self.k:g} method={self.method} "
            f"lambda_min={self.smallest_eigenvalue:.3e} cond={self.condition_estimate:.3e}"
        )

    def _conditioning(self) -> Tuple[float, float]:
        a = self.matrix
        gershgorin = float(np.max(np.abs(a).sum(axis=1)))
        try:
            if self._lu is not None:
                op_inv = spla.LinearOperator(a.shape, matvec=self._lu.solve, dtype=float)
                vals = spla.eigsh(a, k=1, sigma=0.0, which="LM", OPinv=op_inv, return_eigenvectors=False)
            else:
                vals = spla.eigsh(a, k=1, sigma=0.0, which="LM", return_eigenvectors=False)
            lam = float(np.min(np.abs(vals)))
        except (RuntimeError, spla.ArpackNoConvergence) as e:
            raise NearSingular(f"operator Delta + k^2 q is numerically singular at k={self.k:g}: {e}", k=self.k) from e
        condition = math.inf if lam == 0 else gershgorin / lam
        scale = max(self.k ** 2 * float(np.max(np.abs(self.q_omega))), 1.0)
        if condition > settings.CONDITION_CAP or lam < settings.NEAR_SINGULAR_GAP * scale:
            raise NearSingular(
                f"discrete operator near a Dirichlet resonance at k={self.k:g} "
                f"(lambda_min={lam:.3e}, cond={condition:.3e})",
                k=self.k,
                smallest_eigenvalue=lam,
                condition=condition,
            )
        return lam, condition

    def _solve_iterative(self, b: np.ndarray) -> np.ndarray:
        x, info = spla.gmres(
            self.matrix,
            b,
            M=self._jacobi,
            rtol=settings.GMRES_TOL,
            atol=0.0,
            restart=200,
            maxiter=settings.GMRES_MAX_ITER,
        )
        if info != 0:
            raise SolveFailure(f"GMRES did not converge (info={info}) at k={self.k:g}", info=info, k=self.k)
        return x

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs for one vector or a block of columns."""
        rhs = np.asarray(rhs)
        if self._lu is not None:
            x = self._lu.solve(np.ascontiguousarray(rhs.real))
            if np.iscomplexobj(rhs):
                x = x + 1j * self._lu.solve(np.ascontiguousarray(rhs.imag))
            return x
        if rhs.ndim == 1:
            return self._solve_iterative(rhs)
        columns = [rhs[:, j] for j in range(rhs.shape[1])]
        with ThreadPoolExecutor(max_workers=settings.HELMSTAB_THREADS) as pool:
            solved = list(pool.map(self._solve_iterative, columns))
        return np.stack(solved, axis=1)

    def solve_traces(self, traces: Sequence[np.ndarray]) -> list:
        """Omega solutions for a batch of Dirichlet traces (Omega arrays, interior ignored)."""
        grid = self.grid
        inner = _interior(grid)
        blocks = []
        for trace in traces:
            g = np.array(trace, dtype=complex)
            g[inner] = 0.0
            blocks.append(-interior_laplacian(g, grid.h).ravel())
        x = self.solve_interior(np.stack(blocks, axis=1))
        out = []
        for j, trace in enumerate(traces):
            u = np.array(trace, dtype=complex)
            u[inner] = x[:, j].reshape((grid.points_per_axis - 2,) * grid.dim)
            out.append(u)
        return out

    def normal_flux(self, u: np.ndarray, face: Tuple[int, int]) -> np.ndarray:
        """Outward normal derivative on one face (zero on face edges)."""
        grid = self.grid
        axis, side = face
        h = grid.h
        last = grid.points_per_axis - 1
        idx_b: list = [slice(None)] * grid.dim
        idx_1: list = [slice(None)] * grid.dim
        idx_b[axis] = 0 if side == 0 else last
        idx_1[axis] = 1 if side == 0 else last - 1
        ub = u[tuple(idx_b)]
        u1 = u[tuple(idx_1)]
        qb = self.q_omega[tuple(idx_b)]
        flux = np.zeros_like(ub)
        core = (slice(1, -1),) * ub.ndim
        tangential = interior_laplacian(ub, h)
        flux[core] = (ub[core] - u1[core]) / h - 0.5 * h * (tangential + self.k ** 2 * qb[core] * ub[core])
        return flux


def solve_dirichlet_trace(q: ScalarField, k: float, trace: np.ndarray, operator: Optional[HelmholtzOperator] = None) -> ScalarField:
    """Solve (Delta + k^2 q) u = 0 with boundary nodes taken from ``trace``."""
    operator = operator or HelmholtzOperator(q, k)
    u = operator.solve_traces([trace])[0]
    out = np.zeros(q.grid.shape, dtype=complex)
    out[q.grid.omega_slice] = u
    return ScalarField(grid=q.grid, values=out, support_flag=False, label=f"u[k={k:g}]")


def solve_dirichlet(q: ScalarField, k: float, f: np.ndarray, basis: BoundaryBasis) -> ScalarField:
    """Solve with Dirichlet data given as boundary-basis coefficients."""
    return solve_dirichlet_trace(q, k, trace_from_coefficients(f, basis))


def assemble_dn(q: ScalarField, k: float, basis: BoundaryBasis, q_id: str = "") -> DnMap:
    """One solve per basis mode; column j holds the coefficients of Lambda b_j."""
    if q.grid != basis.grid:
        raise ValueError("potential and basis live on different grids")
    try:
        operator = HelmholtzOperator(q, k)
    except (NearSingular, SolveFailure) as e:
        e.context.setdefault("q_id", q_id)
        raise
    logger.info(f"Assembling DN map: k={k:g}, {basis.size} modes, method={operator.method}, q={q_id or q.label}")
    eye = np.eye(basis.size)
    traces = [trace_from_coefficients(eye[:, j], basis) for j in range(basis.size)]
    try:
        solutions = operator.solve_traces(traces)
    except SolveFailure as e:
        e.context.update(q_id=q_id)
        raise
    matrix = np.empty((basis.size, basis.size), dtype=complex)
    table = _sine_table(basis.grid, basis.modes_per_face)
    for j, u in enumerate(solutions):
        matrix[:, j] = np.concatenate(
            [_project_face(operator.normal_flux(u, face), table, basis.grid.h) for face in basis.faces]
        )
    return DnMap(basis=basis, matrix=matrix, k=float(k), q_id=q_id or q.label)


def dn_apply(dn: DnMap, coeffs: np.ndarray) -> np.ndarray:
    return dn.matrix @ np.asarray(coeffs)


def analytic_dn_constant_q(m: Union[int, Sequence[int]], k: float, c: float, n: int = 2) -> float:
    """Same-face diagonal DN response of the separable solution for constant q = c."""
    multi = (m,) if isinstance(m, (int, np.integer)) else tuple(m)
    if len(multi) != n - 1:
        raise ValueError(f"mode multi-index must have {n - 1} entries for n={n}")
    mu2 = math.pi ** 2 * sum(i * i for i in multi) - k ** 2 * c
    if mu2 > 0:
        mu = math.sqrt(mu2)
        return mu / math.tanh(mu)
    if mu2 == 0:
        return 1.0
    mu_hat = math.sqrt(-mu2)
    if abs(math.sin(mu_hat)) < 1e-10:
        raise ResonantMode(f"mode {multi} is resonant at k={k:g}, c={c:g}", mode=list(multi), k=k, c=c)
    return mu_hat / math.tan(mu_hat)


def sobolev_scaling(basis: BoundaryBasis) -> np.ndarray:
    """(1 + mu^2)^(-1/4) per mode: conjugation by W^(-1/2), W = diag((1+mu^2)^(1/2))."""
    return (1.0 + basis.eigenvalues) ** -0.25


def op_norm_star(d: Union[DnMap, np.ndarray], basis: Optional[BoundaryBasis] = None) -> float:
    """H^(1/2) -> H^(-1/2) norm of a DN difference in the mode metric."""
    if isinstance(d, DnMap):
        basis, matrix = d.basis, d.matrix
    else:
        matrix = np.asarray(d)
        if basis is None:
            raise ValueError("a basis is required to weight a bare matrix")
    if not np.any(matrix):
        return 0.0
    w = sobolev_scaling(basis)
    return float(np.linalg.norm(w[:, None] * matrix * w[None, :], 2))


def dn_difference(dn1: DnMap, dn2: DnMap) -> np.ndarray:
    if dn1.basis != dn2.basis:
        raise BasisMismatch("DN maps were assembled in different bases")
    return np.asarray(dn1.matrix) - np.asarray(dn2.matrix)


def symmetry_defect(dn: DnMap) -> float:
    """||Lambda - Lambda^T|| / ||Lambda|| in the Frobenius norm."""
    matrix = np.asarray(dn.matrix)
    return float(np.linalg.norm(matrix - matrix.T) / np.linalg.norm(matrix))


def noise_perturbation(basis: BoundaryBasis, target: float, rng: np.random.Generator) -> np.ndarray:
    """Entrywise complex Gaussian matrix rescaled so that op_norm_star equals ``target``.

    The norm is linear in the scale, so the rescale hits the target exactly and
    no search is needed.
    """
    size = basis.size
    raw = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    if target == 0:
        return np.zeros((size, size), dtype=complex)
    return raw * (target / op_norm_star(raw, basis))
