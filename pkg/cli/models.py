from typing import Any, Dict, List, Optional
from enum import Enum
import json
import logging
from pathlib import Path

from pydantic import BaseModel, Field, ValidationError, field_validator

from core.errors import ConfigError
from core.models import ConstantsLedger, DnMap, ExtractionMode, FourierSample, StabilityRecord
from utils.config import settings

logger = logging.getLogger(__name__)


class Subcommand(str, Enum):
    CHECK_DN = "check-dn"
    CHECK_IDENTITY = "check-identity"
    CHECK_CGO = "check-cgo"
    EXTRACT = "extract"
    RECONSTRUCT = "reconstruct"
    SWEEP = "sweep"


class PotentialSpec(BaseModel):
    kind: str = "gaussian_bump"
    params: Dict[str, Any] = Field(default_factory=dict)


class RunConfig(BaseModel):
    """Everything a run needs; the seed fixes every noise realization."""

    dim: int = Field(2, description="Spatial dimension, 2 or 3")
    points_per_axis: int = Field(65, ge=8)
    pad_factor: float = Field(2.0, ge=2.0)
    modes_per_face: Optional[int] = Field(None, description="Boundary modes per face; defaults to N - 2")
    q1: PotentialSpec = PotentialSpec(params={"width": 0.08, "amplitude": 0.1})
    q2: PotentialSpec = PotentialSpec(kind="constant", params={"c": 0.0})
    k: List[float] = Field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    noise: List[float] = Field(default_factory=lambda: [0.0], description="Target ||E||_* of injected DN noise")
    mode: ExtractionMode = ExtractionMode.BLIND
    strict: bool = Field(False, description="Keep the certified band thresholds in sample designs")
    ledger: Dict[str, float] = Field(default_factory=lambda: {"C1": 0.5, "C2": 0.25, "C4": 2.0})
    seed: int = 0
    out: str = settings.OUTPUT_DIR
    trials: int = Field(5, ge=1, description="Random trace pairs per identity check")
    random_pairs: bool = Field(False, description="Draw a fresh random bump pair for every identity trial")
    zeta_ladder: List[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0])
    zeta0: float = Field(8.0, gt=0)
    radius: Optional[float] = Field(None, description="Single extraction radius for the extract subcommand")
    ladder: bool = Field(False, description="Repeat the single-radius extraction over zeta0 * zeta_ladder (n = 3)")

    @field_validator("k")
    @classmethod
    def _positive_k(cls, v: List[float]) -> List[float]:
        if any(x <= 0 for x in v):
            raise ValueError("frequencies must be positive")
        return v

    @field_validator("noise")
    @classmethod
    def _nonnegative_noise(cls, v: List[float]) -> List[float]:
        if any(x < 0 for x in v):
            raise ValueError("noise targets must be nonnegative")
        return v

    @property
    def modes(self) -> int:
        return self.points_per_axis - 2 if self.modes_per_face is None else self.modes_per_face

    def build_ledger(self) -> ConstantsLedger:
        return ConstantsLedger(n=self.dim).with_overrides(**self.ledger)


class GateResult(BaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""


class SuiteReport(BaseModel):
    subcommand: Subcommand
    gates: List[GateResult] = Field(default_factory=list)
    table: List[Dict[str, Any]] = Field(default_factory=list)
    records: List[StabilityRecord] = Field(default_factory=list)
    failures: List[Dict[str, Any]] = Field(default_factory=list)
    diagnostics: List[Dict[str, Any]] = Field(default_factory=list)
    samples: List[FourierSample] = Field(default_factory=list)
    dn_maps: List[DnMap] = Field(default_factory=list)
    ledger: Optional[ConstantsLedger] = None
    artifacts: Dict[str, str] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Read a JSON run document, apply flag overrides and validate."""
    data: Dict[str, Any] = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}", path=str(path)) from e
    data.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        config = RunConfig(**data)
        config.build_ledger()
    except ValidationError as e:
        fields = [".".join(str(p) for p in err["loc"]) for err in e.errors()]
        raise ConfigError(f"invalid run config: {e.errors()[0]['msg']}", fields=fields) from e
    logger.debug(f"Run config: {config.model_dump_json()}")
    return config
