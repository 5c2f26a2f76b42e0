import math

import numpy as np
import pytest

from core.cgo import (
    build_xi_pair,
    calibrate_c1,
    cgo_remainder,
    cgo_solution,
    contracts,
    diagnostic_record,
    faddeev_solve,
    free_xi,
    pde_residual,
    residual_certificate,
    stencil_residual,
)
from core.errors import BandViolation, ContractionViolated, UnsupportedDimension
from core.fields import l2_norm, make_grid, make_test_potential, zero_field
from core.models import Band, ConstantsLedger, ScalarField


def _unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def test_xi_pairs_are_null_and_sum_to_rho(ledger3, rng):
    limit = ledger3.low_band_limit(1.0)
    for _ in range(1000):
        eta = _unit(rng, 3)
        band = Band.LOW if rng.random() < 0.5 else Band.HIGH
        r = rng.uniform(0, limit) if band is Band.LOW else rng.uniform(ledger3.high_band_start(1.0), 50.0)
        xi1, xi2 = build_xi_pair(r, eta, band, 1.0, ledger3)
        scale = max(r, limit) ** 2
        assert abs(xi1.xi @ xi1.xi) <= 1e-9 * scale
        assert abs(xi2.xi @ xi2.xi) <= 1e-9 * scale
        assert np.allclose(xi1.xi + xi2.xi, -2j * r * eta, atol=1e-9 * max(r, 1.0))


def test_low_band_at_the_origin(ledger3):
    xi1, xi2 = build_xi_pair(0.0, [0.0, 0.0, 1.0], Band.LOW, 1.0, ledger3)
    assert xi1.zeta_norm == pytest.approx(ledger3.low_band_limit(1.0))
    assert np.allclose(xi1.xi + xi2.xi, 0)
    assert abs(xi1.xi @ xi1.xi) < 1e-12


def test_high_band_has_zeta_equal_to_r(ledger2):
    xi1, _ = build_xi_pair(5.0, [0.6, 0.8], Band.HIGH, 1.0, ledger2)
    assert xi1.zeta_norm == pytest.approx(5.0)
    assert not np.any(xi1.alpha)
    assert xi1.norm == pytest.approx(5.0 * math.sqrt(2))


def test_band_guards(ledger2, ledger3):
    with pytest.raises(UnsupportedDimension):
        build_xi_pair(1.0, [1.0, 0.0], Band.LOW, 1.0, ledger2)
    with pytest.raises(BandViolation):
        build_xi_pair(10.0, [1.0, 0.0, 0.0], Band.LOW, 1.0, ledger3)
    with pytest.raises(BandViolation):
        build_xi_pair(1.0, [1.0, 0.0, 0.0], Band.HIGH, 1.0, ledger3)
    with pytest.raises(ValueError):
        build_xi_pair(5.0, [1.0, 1.0], Band.HIGH, 1.0, ledger2)
    xi1, _ = build_xi_pair(1.0, [1.0, 0.0, 0.0], Band.HIGH, 1.0, ledger3, strict=False)
    assert xi1.r == 1.0


def test_faddeev_of_zero_is_zero(grid33):
    w = faddeev_solve(free_xi([5.0, 0.0], [0.0, 5.0]), zero_field(grid33))
    assert not np.any(w.values)


def test_faddeev_inverts_a_single_lattice_exponential():
    grid = make_grid(2, 17)
    kappa = np.array([2 * math.pi, math.pi])
    x, y = grid.coordinates()
    f = ScalarField(grid=grid, values=np.exp(1j * (kappa[0] * x + kappa[1] * y)))
    xi = free_xi([5.0, 0.0], [0.0, 5.0])
    w = faddeev_solve(xi, f, shift=None)
    h = grid.h
    laplacian = -np.sum((2.0 / h * np.sin(0.5 * kappa * h)) ** 2)
    symbol = laplacian + 1j * (xi.xi @ (np.sin(kappa * h) / h))
    assert np.allclose(w.values, f.values / symbol, atol=1e-12)



def test_faddeev_decays_like_one_over_xi(bump33):
    norms = [
        np.linalg.norm(faddeev_solve(free_xi([t, 0.0], [0.0, t]), bump33, shift="auto").values)
        for t in (60.0, 120.0)
    ]
    assert 0.35 <= norms[1] / norms[0] <= 0.65


def test_faddeev_rejects_small_xi(bump33):
    with pytest.raises(ContractionViolated):
        faddeev_solve(free_xi([0.1, 0.0], [0.0, 0.1]), bump33)


def test_remainder_vanishes_for_zero_potential(grid33, ledger2):
    xi1, _ = build_xi_pair(5.0, [1.0, 0.0], Band.HIGH, 1.0, ledger2)
    solution = cgo_remainder(zero_field(grid33), 1.0, xi1, ledger2)
    assert solution.iterations == 0
    assert not np.any(solution.psi.values)


def test_admissible_remainder_is_certified_and_decays(bump33):
    ledger = ConstantsLedger(n=2, C1=1e-3)
    psi_norms = {}
    for r in (30.0, 40.0, 80.0):
        xi1, _ = build_xi_pair(r, [1.0, 0.0], Band.HIGH, 1.0, ledger)
        solution = cgo_remainder(bump33, 1.0, xi1, ledger)
        assert residual_certificate(solution, bump33) <= 1e-4
        assert pde_residual(solution, bump33) <= 1e-5
        assert stencil_residual(solution, bump33) <= 1e-4
        psi_norms[r] = l2_norm(solution.psi)
    assert 0.35 <= psi_norms[80.0] / psi_norms[40.0] <= 0.65

    record = diagnostic_record(solution, ledger.s)
    assert set(record) == {"xi", "k", "iterations", "residual_norm", "psi_l2", "psi_hs"}
    assert diagnostic_record(solution, ledger.s, bump33)["stencil_residual"] <= 1e-4
    assert record["iterations"] >= 1


def test_remainder_is_deterministic(bump33):
    ledger = ConstantsLedger(n=2, C1=1e-3)
    xi1, _ = build_xi_pair(30.0, [0.0, 1.0], Band.HIGH, 1.0, ledger)
    a = cgo_remainder(bump33, 1.0, xi1, ledger)
    b = cgo_remainder(bump33, 1.0, xi1, ledger)
    assert np.array_equal(a.psi.values, b.psi.values)
    assert a.iterations == b.iterations


def test_free_solutions_are_pure_exponentials(grid33, ledger2):
    q = zero_field(grid33)
    xi1, xi2 = build_xi_pair(5.0, [0.6, 0.8], Band.HIGH, 1.0, ledger2)
    u1, _ = cgo_solution(q, 1.0, xi1, ledger2)
    u2, _ = cgo_solution(q, 1.0, xi2, ledger2)
    assert u1.omega_values[16, 16] == pytest.approx(1.0)
    x, y = grid33.coordinates(omega_only=True)
    expected = np.exp(0.5 * (xi1.xi[0] * (x - 0.5) + xi1.xi[1] * (y - 0.5)))
    assert np.allclose(u1.omega_values, expected)
    assert np.allclose(np.abs(u1.omega_values * u2.omega_values), 1.0)


def test_inadmissible_frequency_is_rejected(grid33, ledger2):
    q = make_test_potential(grid33, "gaussian_bump", {"width": 0.1, "amplitude": 1.0})
    xi1, _ = build_xi_pair(0.8, [1.0, 0.0], Band.HIGH, 2.0, ledger2, strict=False)
    with pytest.raises(ContractionViolated):
        cgo_remainder(q, 2.0, xi1, ledger2)


def test_calibrated_c1_contracts(bump33, ledger2):
    c1 = calibrate_c1([bump33], 1.0, ledger2)
    assert 0 < c1 <= ledger2.C1
    assert contracts(bump33, 1.0, c1, ledger2)


def test_stencil_residual_of_a_zero_remainder_is_the_source(bump33):
    ledger = ConstantsLedger(n=2, C1=1e-3)
    xi1, _ = build_xi_pair(8.0, [1.0, 0.0], Band.HIGH, 1.0, ledger)
    solution = cgo_remainder(bump33, 1.0, xi1, ledger)
    blank = solution.model_copy(update={"psi": zero_field(bump33.grid)})
    assert stencil_residual(blank, bump33) == pytest.approx(1.0)
    assert stencil_residual(solution, bump33) <= 1e-4
    assert stencil_residual(solution, zero_field(bump33.grid)) == 0.0


def test_contracts_at_the_eps0_floor(grid33, ledger2):
    weak = make_test_potential(grid33, "gaussian_bump", {"width": 0.1, "amplitude": 1e-4})
    # C1 k^2 ||q|| is far below eps0, so |xi| sits on the floor
    assert contracts(weak, 1.0, 1e-6, ledger2)


def test_remainder_scales_with_k_squared(grid33):
    weak = make_test_potential(grid33, "gaussian_bump", {"width": 0.1, "amplitude": 0.05})
    ledger = ConstantsLedger(n=2, C1=1e-3)
    xi1, _ = build_xi_pair(40.0, [1.0, 0.0], Band.HIGH, 1.0, ledger, strict=False)
    base = l2_norm(cgo_remainder(weak, 1.0, xi1, ledger).psi)
    doubled = l2_norm(cgo_remainder(weak, 2.0, xi1, ledger).psi)
    assert 2.8 <= doubled / base <= 5.2
