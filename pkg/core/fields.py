"""Grids, scalar fields, the shared Fourier convention and Sobolev norms.

All transforms use F f(rho) = integral f(x) exp(-i rho . x) dx. On the padded
periodic lattice this is h^n * fftn(values) at rho_m = 2 pi m / L.
"""
import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidDimension, InvalidResolution, SupportViolation
from .models import FOURIER, GridSpec, ScalarField

logger = logging.getLogger(__name__)

SUPPORT_TOLERANCE = 1e-10
POTENTIAL_KINDS = ("constant", "gaussian_bump", "double_bump")


def make_grid(dim: int, points_per_axis: int, pad_factor: float = 2.0) -> GridSpec:
    if dim not in (2, 3):
        raise InvalidDimension(f"dimension must be 2 or 3, got {dim}", dim=dim)
    if points_per_axis < 8:
        raise InvalidResolution(f"need at least 8 points per axis, got {points_per_axis}", points_per_axis=points_per_axis)
    if pad_factor < 2.0:
        raise InvalidResolution(f"pad_factor must be >= 2, got {pad_factor}", pad_factor=pad_factor)
    grid = GridSpec(dim=dim, points_per_axis=points_per_axis, pad_factor=pad_factor)
    logger.debug(f"Grid n={dim} N={points_per_axis} h={grid.h:.4g} padded={grid.padded_points} L={grid.box_side:.4g}")
    return grid


def zero_field(grid: GridSpec, label: str = "zero") -> ScalarField:
    return ScalarField(grid=grid, values=np.zeros(grid.shape, dtype=complex), support_flag=True, label=label)


def zero_extend(grid: GridSpec, omega_values: np.ndarray, label: str = "") -> ScalarField:
    """Embed Omega samples into the padded lattice, zero elsewhere."""
    values = np.zeros(grid.shape, dtype=complex)
    values[grid.omega_slice] = omega_values
    return ScalarField(grid=grid, values=values, support_flag=True, label=label)


def _gaussian(coords: Sequence[np.ndarray], center: Sequence[float], width: float, amplitude: float) -> np.ndarray:
    r2 = sum((x - c) ** 2 for x, c in zip(coords, center))
    return amplitude * np.exp(-r2 / width ** 2)


def _boundary_mask(grid: GridSpec) -> np.ndarray:
    mask = np.zeros(grid.omega_shape, dtype=bool)
    last = grid.points_per_axis - 1
    for axis in range(grid.dim):
        index = [slice(None)] * grid.dim
        for side in (0, last):
            index[axis] = side
            mask[tuple(index)] = True
    return mask


def _check_bump(grid: GridSpec, center: Sequence[float], width: float, amplitude: float) -> None:
    if len(center) != grid.dim:
        raise SupportViolation(f"bump center {tuple(center)} has wrong dimension", center=list(center))
    if width <= 0:
        raise SupportViolation(f"bump width must be positive, got {width}", width=width)
    distance = min(min(c, 1.0 - c) for c in center)
    if distance < 4 * width:
        raise SupportViolation(
            f"bump at {tuple(center)} with width {width} is closer than 4 widths to the boundary",
            center=list(center),
            width=width,
        )
    boundary = _gaussian(grid.coordinates(omega_only=True), center, width, amplitude)[_boundary_mask(grid)]
    leak = float(np.max(np.abs(boundary)))
    if leak > SUPPORT_TOLERANCE:
        raise SupportViolation(f"bump leaks {leak:.3e} onto the boundary", leak=leak)


def make_test_potential(grid: GridSpec, kind: str, params: Optional[Dict[str, Any]] = None) -> ScalarField:
    """Build a real potential on ``grid``.

    kinds:
        constant      params {c}
        gaussian_bump params {center, width, amplitude}: A exp(-|x-c|^2 / w^2)
        double_bump   params {centers, widths, amplitudes} (sum of two bumps)
    """
    params = dict(params or {})
    if kind == "constant":
        c = float(params.get("c", 1.0))
        return ScalarField(grid=grid, values=np.full(grid.shape, c, dtype=complex), support_flag=False, label=f"constant({c:g})")

    if kind == "gaussian_bump":
        bumps = [(params.get("center", [0.5] * grid.dim), float(params.get("width", 0.1)), float(params.get("amplitude", 1.0)))]
    elif kind == "double_bump":
        centers = params.get("centers", [[0.35] + [0.5] * (grid.dim - 1), [0.65] + [0.5] * (grid.dim - 1)])
        widths = params.get("widths", [0.06, 0.06])
        amplitudes = params.get("amplitudes", [1.0, -0.5])
        bumps = list(zip(centers, [float(w) for w in widths], [float(a) for a in amplitudes]))
    else:
        raise ValueError(f"unknown potential kind {kind!r}; expected one of {POTENTIAL_KINDS}")

    coords = grid.coordinates(omega_only=True)
    omega = np.zeros(grid.omega_shape)
    for center, width, amplitude in bumps:
        _check_bump(grid, center, width, amplitude)
        omega += _gaussian(coords, center, width, amplitude)
    return zero_extend(grid, omega, label=f"{kind}({params})")


def gaussian_fourier(rho: Sequence[float], center: Sequence[float], width: float, amplitude: float) -> complex:
    """Closed-form transform of A exp(-|x-c|^2/w^2) over R^n."""
    rho = np.asarray(rho, dtype=float)
    n = rho.size
    phase = np.exp(-1j * float(np.dot(rho, np.asarray(center, dtype=float))))
    return complex(amplitude * (math.pi * width ** 2) ** (n / 2) * math.exp(-(width ** 2) * float(rho @ rho) / 4) * phase)


def frequency_lattice(grid: GridSpec) -> Tuple[List[np.ndarray], np.ndarray]:
    """Frequency components rho_m = 2 pi m / L in FFT ordering, and |rho|."""
    freqs = 2 * math.pi * np.fft.fftfreq(grid.padded_points, d=grid.h)
    comps = np.meshgrid(*([freqs] * grid.dim), indexing="ij")
    modulus = np.sqrt(sum(c ** 2 for c in comps))
    return comps, modulus


def lattice_transform(field: ScalarField) -> np.ndarray:
    return field.grid.h ** field.grid.dim * np.fft.fftn(field.values)


def inverse_lattice_transform(grid: GridSpec, spectrum: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(spectrum) / grid.h ** grid.dim


def sample_fourier(field: ScalarField, wavevector: Sequence[float]) -> complex:
    """Trapezoid-rule value of the integral of f(x) exp(-i rho.x) over Omega."""
    grid = field.grid
    rho = np.asarray(wavevector, dtype=float)
    if rho.shape != (grid.dim,):
        raise ValueError(f"wavevector must have {grid.dim} components, got shape {rho.shape}")
    if not field.support_flag:
        logger.debug("sample_fourier on a field without support flag integrates over Omega only")
    x = grid.omega_axis()
    weights = np.full(x.size, grid.h)
    weights[[0, -1]] *= 0.5
    result = field.omega_values
    for a in range(grid.dim):
        kernel = weights * np.exp(FOURIER.sign * 1j * rho[a] * x)
        result = np.tensordot(kernel, result, axes=([0], [0]))
    return complex(result)


def l2_norm(field: ScalarField) -> float:
    grid = field.grid
    return float(np.sqrt(grid.h ** grid.dim * np.sum(np.abs(field.values) ** 2)))


def omega_l2_norm(values: np.ndarray, h: float) -> float:
    return float(np.sqrt(h ** values.ndim * np.sum(np.abs(values) ** 2)))


def sobolev_weights(grid: GridSpec, t: float) -> np.ndarray:
    _, modulus = frequency_lattice(grid)
    return (1.0 + modulus ** 2) ** t


def sobolev_norm(field: ScalarField, t: float) -> float:
    """Spectral H^t norm on the padded box, weights (1+|rho|^2)^t.

    Each frequency cell carries volume 1/L^n (the (2 pi)^-n of Plancherel
    times the lattice step), so t = 0 reproduces l2_norm exactly.
    """
    grid = field.grid
    spectrum = lattice_transform(field)
    total = np.sum(sobolev_weights(grid, t) * np.abs(spectrum) ** 2) / grid.box_side ** grid.dim
    return float(np.sqrt(total))


def hs_norm(field: ScalarField, s: float) -> float:
    return sobolev_norm(field, s)


def difference(q1: ScalarField, q2: ScalarField, label: str = "q1-q2") -> ScalarField:
    """Zero extension of q1 - q2."""
    if q1.grid != q2.grid:
        raise ValueError("fields live on different grids")
    values = np.asarray(q1.values) - np.asarray(q2.values)
    outside = np.ones(q1.grid.shape, dtype=bool)
    outside[q1.grid.omega_slice] = False
    leak = float(np.max(np.abs(values[outside]))) if outside.any() else 0.0
    if leak > SUPPORT_TOLERANCE:
        raise SupportViolation(f"difference is not supported in Omega (exterior max {leak:.3e})", leak=leak)
    values[outside] = 0.0
    return ScalarField(grid=q1.grid, values=values, support_flag=True, label=label)
