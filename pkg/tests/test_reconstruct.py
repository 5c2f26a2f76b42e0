import math

import numpy as np
import pytest

from core.errors import CoverageGap, FrequencyTooLow, GapTooLarge, MissingConstant
from core.born_fourier import sample_design
from core.fields import gaussian_fourier, l2_norm
from core.models import ExtractionMode, FourierSample, Regime, StabilityRecord
from core.reconstruct import (
    bound_holds,
    bound_rhs,
    choose_cutoff,
    derive_c5,
    derive_c6,
    error_report,
    fit_constant,
    invert_truncated,
    phi,
    tail_norm,
    truth_samples,
    usable_cutoff,
)


def test_cutoff_equality_case_is_small_regime(ledger2):
    # a k^2 = 2 = p log(1/A) at k = 1, A_star = e^-2
    T, regime = choose_cutoff(math.exp(-2), 1.0, ledger2)
    assert T == pytest.approx(2.0)
    assert regime is Regime.SMALL


def test_cutoff_large_regime(ledger2):
    T, regime = choose_cutoff(0.1, 3.0, ledger2)
    assert regime is Regime.LARGE
    assert T == pytest.approx(ledger2.a * 9.0)


def test_cutoff_zero_gap_is_infinite(ledger2):
    assert choose_cutoff(0.0, 2.0, ledger2) == (math.inf, Regime.SMALL)


def test_cutoff_guards(ledger2):
    with pytest.raises(GapTooLarge):
        choose_cutoff(0.5, 2.0, ledger2)
    with pytest.raises(FrequencyTooLow):
        choose_cutoff(1e-3, 0.5, ledger2)
    with pytest.raises(ValueError):
        choose_cutoff(-1e-3, 2.0, ledger2)


def test_cutoff_is_monotone(ledger2):
    gaps = [1e-1, 1e-2, 1e-4, 1e-8, 1e-16]
    by_gap = [choose_cutoff(g, 2.0, ledger2)[0] for g in gaps]
    assert by_gap == sorted(by_gap)
    by_k = [choose_cutoff(1e-4, k, ledger2)[0] for k in (1.0, 2.0, 4.0, 8.0)]
    assert by_k == sorted(by_k)


def test_usable_cutoff_is_capped(grid33):
    assert usable_cutoff(1e9, grid33) == pytest.approx(min(grid33.nyquist, 24.0))
    assert usable_cutoff(3.0, grid33) == 3.0
    assert usable_cutoff(1e9, grid33, ExtractionMode.TRUTH) == pytest.approx(grid33.nyquist)
    assert usable_cutoff(60.0, grid33, "truth") == 60.0


def test_empty_inversion_is_zero(grid33):
    q = invert_truncated([], 0.0, grid33)
    assert not np.any(q.values)
    assert q.support_flag


def test_inversion_of_exact_samples_recovers_the_bump(bump65):
    T = 120.0
    q = invert_truncated(truth_samples(bump65, T), T, bump65.grid)
    assert l2_norm(q.with_values(q.values - bump65.values)) <= 0.02 * l2_norm(bump65)


def test_truncation_error_decreases_with_the_cutoff(bump65):
    errors = []
    for T in (2.0, 4.0, 8.0, 16.0):
        q = invert_truncated(truth_samples(bump65, T), T, bump65.grid, restrict=False)
        errors.append(l2_norm(q.with_values(q.values - bump65.values)))
    assert all(b < a for a, b in zip(errors, errors[1:]))


def test_unrestricted_error_is_the_spectral_tail(bump65, ledger2):
    T = 10.0
    q = invert_truncated(truth_samples(bump65, T), T, bump65.grid, restrict=False)
    report = error_report(q, bump65, ledger2)
    assert report["err_hms"] == pytest.approx(tail_norm(bump65, T, ledger2.s), rel=1e-8)
    assert set(report) == {"err_hms", "err_l2"}


def test_polar_samples_grid_like_lattice_samples(bump65, ledger2):
    T = 20.0
    design = sample_design(T, 1.0, ledger2, bump65.grid.frequency_step, strict=False)
    polar = [
        FourierSample(rho=p.r * p.eta, value=gaussian_fourier(p.r * p.eta, [0.5, 0.5], 0.08, 1.0), band=p.band,
                      zeta_norm=0.0, error_budget=0.0)
        for p in design
    ]
    exact = invert_truncated(truth_samples(bump65, T), T, bump65.grid, restrict=False)
    gridded = invert_truncated(polar, T, bump65.grid, restrict=False)
    assert l2_norm(gridded.with_values(gridded.values - exact.values)) <= 0.15 * l2_norm(exact)


def test_sparse_samples_leave_a_coverage_gap(grid33):
    samples = [FourierSample(rho=np.zeros(2), value=1 + 0j, band="high", zeta_norm=0.0, error_budget=0.0)]
    with pytest.raises(CoverageGap):
        invert_truncated(samples, 10.0, grid33)
    with pytest.raises(CoverageGap):
        invert_truncated([], 10.0, grid33)


def test_bound_rhs(ledger2):
    with pytest.raises(MissingConstant):
        bound_rhs(1e-3, 1.0, ledger2)
    assert bound_rhs(0.0, 1.0, ledger2, C=1.0) == (0.0, 0.0)
    lip, log_term = bound_rhs(1e-3, 1.0, ledger2, C=1.0)
    assert lip == pytest.approx(math.e * 1e-3)
    assert log_term == pytest.approx((1.0 + math.log(1e3)) ** -ledger2.m)
    assert bound_rhs(1e-3, 1.0, ledger2.model_copy(update={"fitted_C": 1.0})) == (lip, log_term)
    assert bound_rhs(1e-3, 100.0, ledger2, C=1.0)[0] == math.inf


def test_derived_constants(ledger2):
    m, p, a = ledger2.m, ledger2.p, ledger2.a
    assert derive_c6(ledger2) == pytest.approx((1 + a / p) ** (2 * m))
    expected = max(ledger2.C1 ** 2 * (4 * m / math.e) ** (2 * m), p ** (-2 * m)) * (1 + p / a) ** (2 * m)
    assert derive_c5(ledger2) == pytest.approx(expected)
    assert phi(2.0, 1e-4, 1.0, ledger2) == pytest.approx(math.exp(2.0) * 1e-4 + 2.0 ** (-2 * m))


def _record(k, A_star, err, flagged=None):
    return StabilityRecord(k=k, A_star=A_star, T_used=1.0, regime=Regime.LARGE, err_hms=err, err_l2=err, flagged=flagged)


def test_fit_constant_recovers_the_generating_constant(ledger2):
    rows = []
    for i, (k, gap) in enumerate([(1.0, 1e-2), (1.5, 1e-3), (2.0, 1e-4), (2.5, 1e-5), (3.0, 1e-6), (3.5, 1e-7)]):
        exact = sum(bound_rhs(gap, k, ledger2, C=2.0))
        rows.append(_record(k, gap, exact if i % 2 == 0 else 0.5 * exact))
    rows.insert(1, _record(1.2, 0.0, 0.0))
    rows.insert(3, _record(1.7, 1e-3, 10.0, flagged="no_convergence"))
    C, holdout, violations = fit_constant(rows, ledger2)
    assert C == pytest.approx(2.0, rel=1e-6)
    assert len(holdout) == 3
    assert violations == []
    assert all(bound_holds(r, ledger2, C) for r in holdout)


def test_fit_constant_flags_holdout_violations(ledger2):
    fit_row = _record(1.0, 1e-2, sum(bound_rhs(1e-2, 1.0, ledger2, C=1.0)))
    bad = _record(1.0, 1e-2, 1e6)
    C, holdout, violations = fit_constant([fit_row, bad], ledger2)
    assert C == pytest.approx(1.0, rel=1e-6)
    assert violations == [bad]


def test_fit_constant_without_rows(ledger2):
    assert fit_constant([], ledger2) == (None, [], [])
