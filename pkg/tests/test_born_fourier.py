import csv
import io
import logging
import math

import numpy as np
import pytest

from core.born_fourier import (
    DesignPoint,
    alessandrini_pair,
    coverage_gap,
    extract_design,
    extract_fourier_sample,
    fourier_bound,
    sample_design,
    sample_header,
    write_samples,
)
from core.cgo import calibrate_c1
from core.errors import BasisMismatch, CutoffBelowBand
from core.fields import difference, frequency_lattice, hs_norm, sample_fourier, zero_field
from core.forward_dn import assemble_dn, make_basis, solve_dirichlet
from core.models import Band, DnMap, ExtractionMode, FourierSample


@pytest.fixture(scope="module")
def basis8(grid33):
    return make_basis(grid33, 8)


@pytest.fixture(scope="module")
def dn_pair(grid33, bump33, basis8):
    return assemble_dn(bump33, 2.0, basis8, q_id="bump"), assemble_dn(zero_field(grid33), 2.0, basis8, q_id="zero")


def test_pairing_vanishes_for_equal_maps(dn_pair, basis8):
    dn1, _ = dn_pair
    e = np.eye(basis8.size)
    assert alessandrini_pair(dn1, dn1, e[0], e[3], 2.0) == 0


def test_pairing_is_bilinear(dn_pair, basis8, rng):
    dn1, dn2 = dn_pair
    c, d, g = (rng.standard_normal(basis8.size) + 1j * rng.standard_normal(basis8.size) for _ in range(3))
    a = 0.3 - 2j
    lhs = alessandrini_pair(dn1, dn2, a * c + d, g, 2.0)
    rhs = a * alessandrini_pair(dn1, dn2, c, g, 2.0) + alessandrini_pair(dn1, dn2, d, g, 2.0)
    assert lhs == pytest.approx(rhs, rel=1e-10)
    # bilinear, not sesquilinear
    assert alessandrini_pair(dn1, dn2, c, 1j * g, 2.0) == pytest.approx(1j * alessandrini_pair(dn1, dn2, c, g, 2.0), rel=1e-10)


def test_pairing_rejects_foreign_coefficients(dn_pair, grid33, bump33):
    dn1, dn2 = dn_pair
    with pytest.raises(BasisMismatch):
        alessandrini_pair(dn1, dn2, np.ones(3), np.ones(3), 2.0)
    other = assemble_dn(bump33, 2.0, make_basis(grid33, 4))
    with pytest.raises(BasisMismatch):
        alessandrini_pair(dn1, other, np.ones(32), np.ones(32), 2.0)


def test_pairing_matches_the_volume_integral(dn_pair, grid33, bump33, basis8):
    dn1, dn2 = dn_pair
    f = np.eye(basis8.size)[0]
    u1 = solve_dirichlet(bump33, 2.0, f, basis8).omega_values
    u2 = solve_dirichlet(zero_field(grid33), 2.0, f, basis8).omega_values
    w = np.full(grid33.points_per_axis, grid33.h)
    w[[0, -1]] *= 0.5
    volume = float(np.sum(np.outer(w, w) * (-bump33.omega_values.real) * (u1 * u2).real))
    pairing = alessandrini_pair(dn1, dn2, f, f, 2.0)
    assert pairing.real == pytest.approx(volume, rel=0.05)


def test_blind_extraction_is_zero_without_a_gap(grid33, bump33, ledger2):
    basis = make_basis(grid33, 31)
    dn = assemble_dn(bump33, 1.0, basis)
    sample = extract_fourier_sample(dn, dn, 3.0, [1.0, 0.0], 1.0, ledger2, mode=ExtractionMode.BLIND)
    assert sample.value == 0
    assert sample.band is Band.HIGH
    assert sample.zeta_norm == pytest.approx(3.0)
    assert sample.error_budget == pytest.approx(ledger2.C0 / 3.0)
    assert sample.truth is None


def test_truth_mode_reads_the_transform(dn_pair, grid33, bump33, ledger2):
    dn1, dn2 = dn_pair
    q2 = zero_field(grid33)
    rho = 4.0 * np.array([0.6, 0.8])
    sample = extract_fourier_sample(dn1, dn2, 4.0, [0.6, 0.8], 2.0, ledger2, mode="truth", q1=bump33, q2=q2)
    assert sample.value == sample.truth == sample_fourier(difference(bump33, q2), rho)
    with pytest.raises(ValueError):
        extract_fourier_sample(dn1, dn2, 4.0, [0.6, 0.8], 2.0, ledger2, mode="truth")


def test_design_inside_the_low_band_is_all_low(ledger3):
    T = ledger3.low_band_limit(1.0)
    design = sample_design(T, 1.0, ledger3, math.pi)
    assert design
    assert {p.band for p in design} == {Band.LOW}
    assert all(p.certified for p in design)
    assert max(p.r for p in design) == pytest.approx(T)


def test_planar_design_certification(ledger2):
    strict = sample_design(6.0, 1.0, ledger2, math.pi)
    assert min(p.r for p in strict) == pytest.approx(ledger2.high_band_start(1.0))
    assert all(p.certified and p.band is Band.HIGH for p in strict)
    relaxed = sample_design(6.0, 1.0, ledger2, math.pi, strict=False)
    assert min(p.r for p in relaxed) == 0.0
    assert not all(p.certified for p in relaxed)
    assert all(p.certified for p in relaxed if p.r >= ledger2.high_band_start(1.0))


def test_design_below_the_low_band_is_rejected(ledger3):
    with pytest.raises(CutoffBelowBand):
        sample_design(1.0, 1.0, ledger3, math.pi)


def test_design_covers_the_lattice_within_half_a_cell(grid33, ledger2):
    T = 20.0
    design = sample_design(T, 1.0, ledger2, grid33.frequency_step, strict=False)
    comps, _ = frequency_lattice(grid33)
    lattice = np.stack([c.ravel() for c in comps], axis=1)
    assert coverage_gap(design, lattice, T, grid33.frequency_step) <= 0.5


def test_fourier_bound_bands(ledger3):
    low = fourier_bound(1.0, 1.0, 1e-3, 0.2, ledger3, band=Band.LOW)
    assert low[0] == pytest.approx(ledger3.C2 * ledger3.C_chi / ledger3.a0 * 0.2)
    assert low[1] == pytest.approx(ledger3.C2 * math.exp(ledger3.C2 * ledger3.a0) * 1e-3)
    high = fourier_bound(10.0, 1.0, 1e-3, 0.2, ledger3)
    assert high[0] == pytest.approx(ledger3.C2 * ledger3.M * ledger3.C_chi / 10.0 * 0.2)
    assert high[1] == pytest.approx(ledger3.C2 * math.exp(10.0 * ledger3.C2) * 1e-3)
    assert math.isfinite(fourier_bound(1e6, 1.0, 1.0, 0.0, ledger3)[1])


def test_failed_design_points_are_reported(dn_pair, ledger2):
    dn1, dn2 = dn_pair
    design = [DesignPoint(1.0, np.array([1.0, 0.0]), Band.LOW)]
    samples, failures = extract_design(dn1, dn2, design, 2.0, ledger2)
    assert samples == []
    assert failures[0]["code"] == "unsupported_dimension"
    assert failures[0]["r"] == 1.0


def test_write_samples_csv():
    samples = [
        FourierSample(rho=np.array([0.0, 2.0]), value=1 - 2j, band=Band.HIGH, zeta_norm=2.0, error_budget=0.5),
        FourierSample(rho=np.array([0.0, 0.0]), value=0j, band=Band.HIGH, zeta_norm=2.0, error_budget=0.5,
                      certified=False, truth=0.5 + 0j),
    ]
    stream = io.StringIO()
    assert write_samples(samples, stream, 2) == 2
    rows = list(csv.reader(io.StringIO(stream.getvalue())))
    assert rows[0] == sample_header(2)
    first = dict(zip(rows[0], rows[1]))
    assert float(first["eta_1"]) == 1.0
    assert float(first["im"]) == -2.0
    assert first["truth_re"] == ""
    assert first["certified"] == "1"
    second = dict(zip(rows[0], rows[2]))
    assert float(second["eta_0"]) == 1.0
    assert float(second["truth_re"]) == 0.5
    assert second["certified"] == "0"


def _symmetrized(dn: DnMap) -> DnMap:
    m = np.real(np.asarray(dn.matrix))
    return DnMap(basis=dn.basis, matrix=0.5 * (m + m.T), k=dn.k, q_id=dn.q_id)


def test_blind_samples_are_conjugate_symmetric(dn_pair, ledger2):
    dn1, dn2 = (_symmetrized(d) for d in dn_pair)
    eta = np.array([0.6, 0.8])
    plus = extract_fourier_sample(dn1, dn2, 3.0, eta, 2.0, ledger2, strict=False)
    minus = extract_fourier_sample(dn1, dn2, 3.0, -eta, 2.0, ledger2, strict=False)
    assert minus.value == pytest.approx(np.conj(plus.value), rel=1e-9)


@pytest.fixture(scope="module")
def full_pair(grid33, bump33):
    basis = make_basis(grid33, 31)
    return assemble_dn(bump33, 1.0, basis, q_id="bump"), assemble_dn(zero_field(grid33), 1.0, basis, q_id="zero")


def test_blind_extraction_tracks_the_transform(full_pair, grid33, bump33, ledger2):
    dn1, dn2 = full_pair
    sample = extract_fourier_sample(dn1, dn2, 6.0, [0.6, 0.8], 1.0, ledger2, q1=bump33, q2=zero_field(grid33), strict=False)
    assert abs(sample.value - sample.truth) <= 0.15 * abs(sample.truth)


def test_oracle_extraction_with_a_calibrated_constant(full_pair, grid33, bump33, ledger2):
    dn1, dn2 = full_pair
    c1 = calibrate_c1([bump33], 1.0, ledger2)
    r = max(6.0, 1.01 * c1 * hs_norm(bump33, ledger2.s) / math.sqrt(2))
    sample = extract_fourier_sample(dn1, dn2, r, [1.0, 0.0], 1.0, ledger2, mode=ExtractionMode.ORACLE,
                                    q1=bump33, q2=zero_field(grid33), strict=False, cgo_C1=c1)
    assert abs(sample.value - sample.truth) <= 0.15 * abs(sample.truth)


def test_lossy_trace_projection_is_logged(grid33, bump33, ledger2, caplog):
    basis = make_basis(grid33, 2)
    dn1 = assemble_dn(bump33, 2.0, basis)
    dn2 = assemble_dn(zero_field(grid33), 2.0, basis)
    with caplog.at_level(logging.WARNING, logger="core.born_fourier"):
        extract_fourier_sample(dn1, dn2, 0.5, [1.0, 0.0], 2.0, ledger2, strict=False)
    assert any("boundary energy" in rec.getMessage() for rec in caplog.records)


def test_design_limit_truncates_the_ladder_only(ledger3):
    T = 2 * ledger3.low_band_limit(1.0)
    capped = sample_design(T, 1.0, ledger3, math.pi, limit=1.5)
    assert max(p.r for p in capped) == pytest.approx(1.5)
    loose = sample_design(T, 1.0, ledger3, math.pi, limit=10 * T)
    assert [p.r for p in loose] == [p.r for p in sample_design(T, 1.0, ledger3, math.pi)]
    with pytest.raises(CutoffBelowBand):
        sample_design(1.0, 1.0, ledger3, math.pi, limit=0.5)
