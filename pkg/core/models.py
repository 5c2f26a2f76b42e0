from typing import Dict, List, Literal, Optional, Tuple
from enum import Enum
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigError


class Band(str, Enum):
    LOW = "low"
    HIGH = "high"


class Regime(str, Enum):
    SMALL = "small"
    LARGE = "large"


class ExtractionMode(str, Enum):
    ORACLE = "oracle"
    BLIND = "blind"
    TRUTH = "truth"


class GridSpec(BaseModel):
    """Regular grid on the unit box plus the periodic box that contains it.

    Omega = (0,1)^n is sampled with ``points_per_axis`` nodes per axis. The
    periodic box shares the spacing h and has ``padded_points`` nodes per axis
    (an even number); Omega sits in the first N indices of every axis.
    """

    model_config = ConfigDict(frozen=True)

    dim: int
    points_per_axis: int
    pad_factor: float = 2.0

    @property
    def h(self) -> float:
        return 1.0 / (self.points_per_axis - 1)

    @property
    def padded_points(self) -> int:
        return 2 * int(round((self.points_per_axis - 1) * self.pad_factor / 2.0))

    @property
    def box_side(self) -> float:
        return self.padded_points * self.h

    @property
    def radius(self) -> float:
        # Omega is contained in B_R(0)
        return math.sqrt(self.dim)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.padded_points,) * self.dim

    @property
    def omega_shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def omega_slice(self) -> Tuple[slice, ...]:
        return (slice(0, self.points_per_axis),) * self.dim

    @property
    def frequency_step(self) -> float:
        return 2.0 * math.pi / self.box_side

    @property
    def nyquist(self) -> float:
        return math.pi / self.h

    @property
    def center(self) -> np.ndarray:
        return np.full(self.dim, 0.5)

    def axis(self) -> np.ndarray:
        return np.arange(self.padded_points) * self.h

    def omega_axis(self) -> np.ndarray:
        return np.arange(self.points_per_axis) * self.h

    def coordinates(self, omega_only: bool = False) -> List[np.ndarray]:
        ax = self.omega_axis() if omega_only else self.axis()
        return np.meshgrid(*([ax] * self.dim), indexing="ij")

    def descriptor(self) -> Dict[str, float]:
        return {"dim": self.dim, "points_per_axis": self.points_per_axis, "pad_factor": self.pad_factor}


class ScalarField(BaseModel):
    """Complex samples on the padded lattice of ``grid`` (immutable)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: GridSpec
    values: np.ndarray
    support_flag: bool = False
    label: str = ""

    @model_validator(mode="after")
    def _check_values(self) -> "ScalarField":
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match lattice {self.grid.shape}")
        if self.support_flag:
            outside = np.ones(self.grid.shape, dtype=bool)
            outside[self.grid.omega_slice] = False
            if np.any(self.values[outside] != 0):
                raise ValueError("support_flag set but the field is nonzero outside Omega")
        self.values.setflags(write=False)
        return self

    @property
    def omega_values(self) -> np.ndarray:
        return self.values[self.grid.omega_slice]

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.values.imag == 0))

    def with_values(self, values: np.ndarray, support_flag: Optional[bool] = None, label: Optional[str] = None) -> "ScalarField":
        return ScalarField(
            grid=self.grid,
            values=np.array(values, dtype=complex),
            support_flag=self.support_flag if support_flag is None else support_flag,
            label=self.label if label is None else label,
        )


class FourierConvention(BaseModel):
    """F f(rho) = integral of f(x) exp(-i rho . x) dx, no 2*pi factor."""

    model_config = ConfigDict(frozen=True)

    sign: Literal[-1] = -1
    normalization: Literal["none"] = "none"


FOURIER = FourierConvention()


class BoundaryBasis(BaseModel):
    """Tensor sine modes on every face of the unit box.

    ``faces`` lists (axis, side) pairs; ``entries`` lists (face index, multi-index).
    Basis functions are the unnormalized products of sin(m_j pi t_j) over the
    tangential coordinates, so coefficients of a trace are its sine-series
    coefficients.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: GridSpec
    modes_per_face: int
    faces: Tuple[Tuple[int, int], ...]
    entries: Tuple[Tuple[int, Tuple[int, ...]], ...]

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Laplace-Beltrami eigenvalues mu_m^2 = pi^2 |m|^2."""
        return np.array([math.pi ** 2 * sum(i * i for i in m) for _, m in self.entries])

    @property
    def norms_squared(self) -> np.ndarray:
        return np.full(self.size, 0.5 ** (self.grid.dim - 1))

    def index_of(self, face: Tuple[int, int], multi_index: Tuple[int, ...]) -> int:
        return self.entries.index((self.faces.index(face), tuple(multi_index)))

    def descriptor(self) -> Dict[str, object]:
        return {"grid": self.grid.descriptor(), "modes_per_face": self.modes_per_face}


class DnMap(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    basis: BoundaryBasis
    matrix: np.ndarray
    k: float
    q_id: str = ""

    @model_validator(mode="after")
    def _check_matrix(self) -> "DnMap":
        if self.matrix.shape != (self.basis.size, self.basis.size):
            raise ValueError(f"DN matrix shape {self.matrix.shape} does not match basis size {self.basis.size}")
        self.matrix.setflags(write=False)
        return self


class CgoVector(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    xi: np.ndarray
    zeta: np.ndarray
    alpha: np.ndarray
    r: float
    eta: np.ndarray
    sign: Literal[1, 2] = 1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.xi))

    @property
    def zeta_norm(self) -> float:
        return float(np.linalg.norm(self.zeta))

    def as_dict(self) -> Dict[str, object]:
        return {
            "xi_re": self.xi.real.tolist(),
            "xi_im": self.xi.imag.tolist(),
            "r": self.r,
            "eta": self.eta.tolist(),
            "sign": self.sign,
        }


class CgoSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    psi: ScalarField
    xi: CgoVector
    k: float
    residual_norm: float
    iterations: int
    shift: np.ndarray
    origin: np.ndarray


class FourierSample(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    rho: np.ndarray
    value: complex
    band: Band
    zeta_norm: float
    error_budget: float
    certified: bool = True
    truth: Optional[complex] = None

    @property
    def r(self) -> float:
        return float(np.linalg.norm(self.rho))


class ConstantsLedger(BaseModel):
    """Every constant the stability argument names, in one validated record.

    ``A`` in the proof is the squared operator-norm gap; formulas below say
    which of A or A_star they consume.
    """

    model_config = ConfigDict(frozen=True)

    n: int = 2
    s: float = 3.0
    M: float = Field(1.0, gt=0)
    C0: float = Field(1.0, gt=0)
    C1: float = Field(2.0, gt=0)
    C2: float = Field(1.0, gt=0)
    C3: float = Field(1.0, gt=0)
    C4: float = Field(1.0, gt=0)
    C5: float = Field(1.0, gt=0)
    C6: float = Field(1.0, gt=0)
    C_chi: float = Field(1.0, gt=0)
    a0: Optional[float] = None
    eps0: float = Field(1.0, gt=0)
    fitted_C: Optional[float] = None

    @field_validator("n")
    @classmethod
    def _dim(cls, v: int) -> int:
        if v not in (2, 3):
            raise ValueError("ledger dimension must be 2 or 3")
        return v

    @model_validator(mode="after")
    def _check(self) -> "ConstantsLedger":
        if self.s <= self.n / 2 + 1:
            raise ValueError(f"s = {self.s} must exceed n/2 + 1 = {self.n / 2 + 1}")
        if self.a0 is None:
            object.__setattr__(self, "a0", 2 * self.C2 * self.C_chi)
        if self.a0 < self.C1:
            raise ValueError(f"a0 = {self.a0} must be >= C1 = {self.C1}")
        return self

    @property
    def m(self) -> float:
        return 2 * self.s - self.n

    @property
    def a(self) -> float:
        return 2 * self.C2 * self.C_chi * self.M ** 2

    @property
    def p(self) -> float:
        return 1.0 / (2 * self.C4)

    def epsilon(self, T: float) -> float:
        """Interpolation weight of the tail estimate; documentation only."""
        return T ** self.m / (4 * self.C3)

    def low_band_limit(self, k: float) -> float:
        return self.a0 * k ** 2 * self.M

    def high_band_start(self, k: float) -> float:
        return self.C1 * k ** 2 * self.M

    def k_admissible(self, k: float) -> bool:
        return k ** 2 >= 1.0 / (self.C1 * self.M)

    def with_overrides(self, **overrides) -> "ConstantsLedger":
        data = self.model_dump()
        data.update(overrides)
        if "a0" not in overrides and {"C2", "C_chi"} & overrides.keys():
            data["a0"] = None
        try:
            return ConstantsLedger(**data)
        except ValueError as e:
            raise ConfigError(f"invalid ledger override: {e}") from e


CSV_HEADER = ("k", "A_star", "T_used", "regime", "err_hms", "err_l2", "lip_term", "log_term", "band_mode", "seed")


class StabilityRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: float
    A_star: float
    T_used: float
    regime: Regime
    err_hms: float
    err_l2: float
    lip_term: float = float("nan")
    log_term: float = float("nan")
    band_mode: str = ExtractionMode.BLIND.value
    seed: int = 0
    noise_target: float = 0.0
    flagged: Optional[str] = None

    @property
    def A(self) -> float:
        return self.A_star ** 2

    def csv_row(self) -> Tuple[str, ...]:
        return (
            f"{self.k:.6g}",
            f"{self.A_star:.10e}",
            f"{self.T_used:.10e}",
            self.regime.value,
            f"{self.err_hms:.10e}",
            f"{self.err_l2:.10e}",
            f"{self.lip_term:.10e}",
            f"{self.log_term:.10e}",
            self.band_mode,
            str(self.seed),
        )
