import math

import pytest
from pydantic import ValidationError

from core.errors import ConfigError, GapTooLarge, describe
from core.models import CSV_HEADER, ConstantsLedger, GridSpec, Regime, StabilityRecord


def test_grid_derived_quantities():
    grid = GridSpec(dim=2, points_per_axis=65, pad_factor=2.0)
    assert grid.h == pytest.approx(1 / 64)
    assert grid.padded_points == 128
    assert grid.box_side == pytest.approx(2.0)
    assert grid.frequency_step == pytest.approx(math.pi)
    assert grid.radius == pytest.approx(math.sqrt(2))


def test_ledger_defaults_follow_the_constant_rules():
    ledger = ConstantsLedger(n=3, s=3.0, C2=1.5, C_chi=2.0, C4=0.25)
    assert ledger.a0 == pytest.approx(2 * 1.5 * 2.0)
    assert ledger.a == pytest.approx(2 * 1.5 * 2.0 * ledger.M ** 2)
    assert ledger.m == pytest.approx(3.0)
    assert ledger.p == pytest.approx(2.0)
    assert ledger.epsilon(2.0) == pytest.approx(2.0 ** 3 / 4)


@pytest.mark.parametrize("kwargs", [{"n": 2, "s": 2.0}, {"n": 4}, {"n": 2, "C1": 3.0}])
def test_ledger_rejects_invalid_constants(kwargs):
    with pytest.raises(ValidationError):
        ConstantsLedger(**kwargs)


def test_with_overrides_recomputes_a0_and_wraps_errors():
    ledger = ConstantsLedger(n=2)
    assert ledger.with_overrides(C2=0.25, C1=0.5).a0 == pytest.approx(0.5)
    assert ledger.with_overrides(a0=5.0, C2=0.25).a0 == pytest.approx(5.0)
    with pytest.raises(ConfigError):
        ledger.with_overrides(C1=10.0)


def test_k_admissibility():
    ledger = ConstantsLedger(n=2, C1=2.0, M=1.0)
    assert ledger.k_admissible(1.0)
    assert not ledger.k_admissible(0.5)


def test_stability_record_row_matches_header():
    record = StabilityRecord(k=2, A_star=1e-3, T_used=8, regime=Regime.LARGE, err_hms=0.1, err_l2=0.2, seed=7)
    row = record.csv_row()
    assert len(row) == len(CSV_HEADER) == 10
    assert row[3] == "large"
    assert row[-1] == "7"
    assert record.A == pytest.approx(1e-6)


def test_errors_carry_codes_and_context():
    err = GapTooLarge("too big", A_star=0.5)
    assert err.to_dict() == {"code": "gap_too_large", "detail": "too big", "A_star": 0.5}
    assert describe(err)["code"] == "gap_too_large"
