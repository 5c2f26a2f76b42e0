"""Verification suites and the stability sweep.

Every function takes a RunConfig and returns a SuiteReport; nothing here
touches the filesystem (cli.routes does that).
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import spearmanr

from cli.models import GateResult, RunConfig, Subcommand, SuiteReport
from core.born_fourier import DesignPoint, alessandrini_pair, default_band, extract_design, extract_fourier_sample, sample_design
from core.cgo import (
    build_xi_pair,
    calibrate_c1,
    cgo_remainder,
    diagnostic_record,
    pde_residual,
    residual_certificate,
    stencil_residual,
)
from core.errors import HelmstabError, describe
from core.fields import difference, make_grid, make_test_potential, omega_l2_norm, sample_fourier, zero_extend, zero_field
from core.forward_dn import (
    HelmholtzOperator,
    analytic_dn_constant_q,
    assemble_dn,
    make_basis,
    noise_perturbation,
    op_norm_star,
    dn_difference,
    solve_dirichlet_trace,
    symmetry_defect,
    trace_from_coefficients,
)
from core.models import Band, BoundaryBasis, ConstantsLedger, DnMap, ExtractionMode, GridSpec, ScalarField, StabilityRecord
from core.reconstruct import bound_rhs, choose_cutoff, error_report, fit_constant, invert_truncated, truth_samples, usable_cutoff
from utils.config import settings

logger = logging.getLogger(__name__)

IDENTITY_GATE = 0.05
ORACLE_GATE = 0.01
SYMMETRY_GATE = 0.05
SLOPE_RANGE = (-1.35, -0.65)
RESIDUAL_GATE = 1e-4
K_SCALING_RANGE = (4.0 * 0.7, 4.0 * 1.3)
SPEARMAN_GATE = -0.9

# random identity pairs: centres, widths and amplitudes drawn uniformly
PAIR_CENTERS = (0.35, 0.65)
PAIR_WIDTHS = (0.05, 0.07)
PAIR_AMPLITUDES = (-0.5, 0.5)


class Setup:
    """Grid, potentials, basis and ledger shared by every cell of a run."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.grid: GridSpec = make_grid(config.dim, config.points_per_axis, config.pad_factor)
        self.q1: ScalarField = make_test_potential(self.grid, config.q1.kind, config.q1.params)
        self.q2: ScalarField = make_test_potential(self.grid, config.q2.kind, config.q2.params)
        self.basis: BoundaryBasis = make_basis(self.grid, config.modes)
        self.ledger: ConstantsLedger = config.build_ledger()

    @property
    def q_tilde(self) -> ScalarField:
        return difference(self.q1, self.q2)

    def dn_pair(self, k: float) -> Tuple[DnMap, DnMap]:
        return (
            assemble_dn(self.q1, k, self.basis, q_id="q1"),
            assemble_dn(self.q2, k, self.basis, q_id="q2"),
        )

    def oracle_c1(self, k: float) -> Optional[float]:
        """Calibrated C1 for oracle traces at k; None outside oracle mode."""
        if ExtractionMode(self.config.mode) is not ExtractionMode.ORACLE:
            return None
        nonzero = [q for q in (self.q1, self.q2) if np.any(q.values)]
        c1 = calibrate_c1(nonzero, k, self.ledger)
        logger.info(f"Oracle traces at k={k:g} admitted with calibrated C1 = {c1:.4g}")
        return c1


def _omega_integral(grid: GridSpec, omega_values: np.ndarray) -> complex:
    return sample_fourier(zero_extend(grid, omega_values), np.zeros(grid.dim))


def _failure(error: HelmstabError, **where) -> Dict[str, object]:
    return {**where, **describe(error)}


def _completion_gate(name: str, done: int, failed: int) -> GateResult:
    return GateResult(name=name, passed=done > 0, value=float(done), detail=f"{failed} failed")


# ---------------------------------------------------------------- check-dn

def run_check_dn(config: RunConfig) -> SuiteReport:
    """Oracle agreement (constant q1) and symmetry of assembled DN maps."""
    setup = Setup(config)
    report = SuiteReport(subcommand=Subcommand.CHECK_DN, ledger=setup.ledger)
    constant = config.q1.kind == "constant"
    c = float(config.q1.params.get("c", 1.0))
    face = setup.basis.faces[0]
    worst_oracle, worst_symmetry = 0.0, 0.0
    for k in config.k:
        try:
            dn = assemble_dn(setup.q1, k, setup.basis, q_id="q1")
        except HelmstabError as e:
            logger.warning(f"DN assembly failed at k={k:g}: {e}")
            report.failures.append(_failure(e, k=k))
            continue
        report.dn_maps.append(dn)
        defect = symmetry_defect(dn)
        worst_symmetry = max(worst_symmetry, defect)
        report.table.append({"k": k, "mode": "", "computed": "", "oracle": "", "rel_error": "", "symmetry_defect": defect})
        if not constant:
            continue
        for m in range(1, min(4, setup.basis.modes_per_face) + 1):
            multi = (m,) + (1,) * (config.dim - 2)
            try:
                oracle = analytic_dn_constant_q(multi, k, c, n=config.dim)
            except HelmstabError as e:
                report.failures.append(_failure(e, k=k, mode=m))
                continue
            i = setup.basis.index_of(face, multi)
            computed = float(np.real(dn.matrix[i, i]))
            rel = abs(computed - oracle) / abs(oracle)
            worst_oracle = max(worst_oracle, rel)
            report.table.append({"k": k, "mode": m, "computed": computed, "oracle": oracle, "rel_error": rel, "symmetry_defect": defect})
    if constant:
        report.gates.append(GateResult(name="dn_oracle", passed=worst_oracle <= ORACLE_GATE and not report.failures,
                                       value=worst_oracle, threshold=ORACLE_GATE))
    report.gates.append(GateResult(name="dn_symmetry", passed=worst_symmetry <= SYMMETRY_GATE and bool(report.dn_maps),
                                   value=worst_symmetry, threshold=SYMMETRY_GATE))
    return report


# ---------------------------------------------------------------- check-identity

def smooth_coefficients(basis: BoundaryBasis, rng: np.random.Generator) -> np.ndarray:
    """Random complex trace coefficients decaying like 1/(1 + mu^2)."""
    raw = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
    return raw / (1.0 + basis.eigenvalues)


def random_bump(grid: GridSpec, rng: np.random.Generator, label: str) -> ScalarField:
    params = {
        "center": rng.uniform(*PAIR_CENTERS, size=grid.dim).tolist(),
        "width": float(rng.uniform(*PAIR_WIDTHS)),
        "amplitude": float(rng.uniform(*PAIR_AMPLITUDES)),
    }
    field = make_test_potential(grid, "gaussian_bump", params)
    return field.with_values(field.values, label=f"{label}{params}")


def identity_discrepancy(
    q1: ScalarField,
    q2: ScalarField,
    k: float,
    dn1: DnMap,
    dn2: DnMap,
    c1: np.ndarray,
    c2: np.ndarray,
    operators: Optional[Tuple[HelmholtzOperator, HelmholtzOperator]] = None,
) -> Tuple[complex, complex, float]:
    """Boundary pairing, volume integral of (q2 - q1) u1 u2 and their relative gap."""
    basis = dn1.basis
    op1, op2 = operators or (HelmholtzOperator(q1, k), HelmholtzOperator(q2, k))
    u1 = solve_dirichlet_trace(q1, k, trace_from_coefficients(c1, basis), operator=op1)
    u2 = solve_dirichlet_trace(q2, k, trace_from_coefficients(c2, basis), operator=op2)
    pairing = alessandrini_pair(dn1, dn2, c1, c2, k)
    dq = np.asarray(q2.omega_values) - np.asarray(q1.omega_values)
    volume = _omega_integral(q1.grid, dq * u1.omega_values * u2.omega_values)
    if volume == 0 and pairing == 0:
        return pairing, volume, 0.0
    return pairing, volume, abs(pairing - volume) / max(abs(volume), 1e-300)


def _identity_pair(q1: ScalarField, q2: ScalarField, k: float, basis: BoundaryBasis):
    return (
        assemble_dn(q1, k, basis, q_id=q1.label),
        assemble_dn(q2, k, basis, q_id=q2.label),
        (HelmholtzOperator(q1, k), HelmholtzOperator(q2, k)),
    )


def run_identity_check(config: RunConfig) -> SuiteReport:
    """Pairing against volume integral over random traces; ``random_pairs`` also draws the potentials."""
    setup = Setup(config)
    report = SuiteReport(subcommand=Subcommand.CHECK_IDENTITY, ledger=setup.ledger)
    rng = np.random.default_rng(config.seed)
    worst = 0.0
    for k in config.k:
        assembled = None
        for trial in range(config.trials):
            if config.random_pairs:
                q1, q2 = random_bump(setup.grid, rng, "q1"), random_bump(setup.grid, rng, "q2")
            else:
                q1, q2 = setup.q1, setup.q2
            try:
                if assembled is None or config.random_pairs:
                    assembled = _identity_pair(q1, q2, k, setup.basis)
            except HelmstabError as e:
                logger.warning(f"Identity check skipped k={k:g} trial {trial}: {e}")
                report.failures.append(_failure(e, k=k, trial=trial))
                if not config.random_pairs:
                    break
                continue
            dn1, dn2, operators = assembled
            c1 = smooth_coefficients(setup.basis, rng)
            c2 = smooth_coefficients(setup.basis, rng)
            pairing, volume, rel = identity_discrepancy(q1, q2, k, dn1, dn2, c1, c2, operators)
            worst = max(worst, rel)
            report.table.append({"k": k, "trial": trial, "q1": q1.label, "q2": q2.label,
                                 "pairing": pairing, "volume": volume, "rel_discrepancy": rel})
    report.gates.append(GateResult(name="alessandrini_identity",
                                   passed=worst <= IDENTITY_GATE and not report.failures and bool(report.table),
                                   value=worst, threshold=IDENTITY_GATE))
    logger.info(f"Identity check: worst discrepancy {worst:.3e} over {len(report.table)} trials")
    return report


# ---------------------------------------------------------------- check-cgo

def decay_slope(zeta_norms, psi_norms) -> float:
    return float(np.polyfit(np.log(zeta_norms), np.log(psi_norms), 1)[0])


def run_cgo_suite(config: RunConfig) -> SuiteReport:
    """Calibrate C1, then measure psi decay along the |zeta| ladder and its k^2 scaling."""
    setup = Setup(config)
    k0 = config.k[0]
    nonzero = [q for q in (setup.q1, setup.q2) if np.any(q.values)]
    report = SuiteReport(subcommand=Subcommand.CHECK_CGO)
    try:
        c1 = calibrate_c1(nonzero, k0, setup.ledger)
    except HelmstabError as e:
        report.failures.append(_failure(e, k=k0))
        report.gates.append(GateResult(name="c1_calibration", passed=False, detail=str(e)))
        report.ledger = setup.ledger
        return report
    ledger = setup.ledger.with_overrides(C1=max(c1, 1e-12), a0=max(setup.ledger.a0, c1))
    report.ledger = ledger
    logger.info(f"Calibrated C1 = {c1:.4g} at k={k0:g}")

    eta = np.eye(config.dim)[0]
    rows: Dict[str, List[Tuple[float, float]]] = {}
    worst_certificate, worst_stencil = 0.0, 0.0
    candidates = [("q1", setup.q1, k0), ("q2", setup.q2, k0), ("zero", zero_field(setup.grid), k0), ("q1@2k", setup.q1, 2 * k0)]
    for name, q, k in candidates:
        for mult in config.zeta_ladder:
            r = config.zeta0 * mult
            xi1, _ = build_xi_pair(r, eta, Band.HIGH, k, ledger, strict=False)
            try:
                solution = cgo_remainder(q, k, xi1, ledger, check_admissible=name != "q1@2k")
            except HelmstabError as e:
                logger.warning(f"CGO construction failed for {name} at |zeta|={r:g}: {e}")
                report.failures.append(_failure(e, potential=name, k=k, zeta_norm=r))
                continue
            certificate = residual_certificate(solution, q)
            stencil = stencil_residual(solution, q)
            worst_certificate = max(worst_certificate, certificate)
            worst_stencil = max(worst_stencil, stencil)
            psi_l2 = omega_l2_norm(np.asarray(solution.psi.omega_values), setup.grid.h)
            rows.setdefault(name, []).append((r, psi_l2))
            report.table.append({
                "potential": name, "k": k, "zeta_norm": r, "iterations": solution.iterations,
                "psi_l2": psi_l2, "residual_norm": solution.residual_norm, "certificate": certificate,
                "pde_residual": pde_residual(solution, q), "stencil_residual": stencil,
            })
            report.diagnostics.append({"potential": name, **diagnostic_record(solution, ledger.s, q)})

    for name in ("q1", "q2"):
        pts = rows.get(name, [])
        if len(pts) >= 2 and all(p > 0 for _, p in pts):
            slope = decay_slope([z for z, _ in pts], [p for _, p in pts])
            report.gates.append(GateResult(name=f"decay_slope_{name}", passed=SLOPE_RANGE[0] <= slope <= SLOPE_RANGE[1],
                                           value=slope, threshold=SLOPE_RANGE[1]))
    zero_ok = all(p == 0 for _, p in rows.get("zero", []))
    report.gates.append(GateResult(name="zero_potential", passed=zero_ok))
    report.gates.append(GateResult(name="residual_certificate", passed=worst_certificate <= RESIDUAL_GATE,
                                   value=worst_certificate, threshold=RESIDUAL_GATE))
    report.gates.append(GateResult(name="stencil_residual", passed=worst_stencil <= RESIDUAL_GATE,
                                   value=worst_stencil, threshold=RESIDUAL_GATE))
    base, doubled = rows.get("q1", []), rows.get("q1@2k", [])
    if base and len(base) == len(doubled):
        ratios = [d / b for (_, b), (_, d) in zip(base, doubled) if b > 0]
        ok = bool(ratios) and all(K_SCALING_RANGE[0] <= x <= K_SCALING_RANGE[1] for x in ratios)
        report.gates.append(GateResult(name="k_squared_scaling", passed=ok, value=float(np.mean(ratios)) if ratios else None))
    return report


# ---------------------------------------------------------------- extraction and sweep

def gap_with_noise(dn1: DnMap, dn2: DnMap, target: float, rng: np.random.Generator) -> Tuple[DnMap, float]:
    """Perturb Lambda_1 by seeded noise of norm ``target``; return it with the resulting gap A_star."""
    noise = noise_perturbation(dn1.basis, target, rng)
    noisy = DnMap(basis=dn1.basis, matrix=np.asarray(dn1.matrix) + noise, k=dn1.k, q_id=f"{dn1.q_id}+noise({target:g})")
    return noisy, op_norm_star(dn_difference(noisy, dn2), dn1.basis)


def cell_rng(seed: int, cell: int) -> np.random.Generator:
    return np.random.default_rng([seed, cell])


def run_cell(
    setup: Setup,
    k: float,
    target: float,
    cell: int,
    dns: Tuple[DnMap, DnMap],
) -> Tuple[Optional[StabilityRecord], Optional[ScalarField], List[Dict[str, object]]]:
    """One (k, noise) cell: noise, cutoff, samples, inversion and error norms.

    Errors are measured on the unrestricted truncated inverse; the emitted
    field is its restriction to Omega. Truth mode grids exact lattice samples,
    so its error is the spectral tail beyond the cutoff.
    """
    config = setup.config
    mode = ExtractionMode(config.mode)
    failures: List[Dict[str, object]] = []
    try:
        noisy, A_star = gap_with_noise(dns[0], dns[1], target, cell_rng(config.seed, cell))
        T, regime = choose_cutoff(A_star, k, setup.ledger)
        T_used = usable_cutoff(T, setup.grid, mode)
        flagged = None
        if A_star == 0:
            flagged = "zero_gap"
            q_full = zero_field(setup.grid, label="q_rec")
        else:
            if T_used < T:
                logger.info(f"Cell k={k:g} noise={target:g}: cutoff {T:.4g} truncated to {T_used:.4g}")
            if mode is ExtractionMode.TRUTH:
                samples = truth_samples(setup.q_tilde, T_used)
            else:
                design = sample_design(T, k, setup.ledger, setup.grid.frequency_step, strict=config.strict, limit=T_used)
                samples, failures = extract_design(noisy, dns[1], design, k, setup.ledger, mode=mode,
                                                   q1=setup.q1, q2=setup.q2, cgo_C1=setup.oracle_c1(k))
            q_full = invert_truncated(samples, T_used, setup.grid, restrict=False)
        errors = error_report(q_full, setup.q_tilde, setup.ledger)
    except HelmstabError as e:
        logger.warning(f"Cell k={k:g} noise={target:g} failed: {e}")
        return None, None, failures + [_failure(e, k=k, noise=target)]
    record = StabilityRecord(
        k=k,
        A_star=A_star,
        T_used=T_used,
        regime=regime,
        err_hms=errors["err_hms"],
        err_l2=errors["err_l2"],
        band_mode=mode.value,
        seed=config.seed,
        noise_target=target,
        flagged=flagged,
    )
    logger.info(f"Cell k={k:g} noise={target:g}: A*={A_star:.3e} T={T_used:.3g} ({regime.value}) err_hms={record.err_hms:.3e}")
    q_rec = zero_extend(setup.grid, np.asarray(q_full.omega_values), label=q_full.label)
    return record, q_rec, failures


def _assemble_all(setup: Setup, ks: List[float]) -> Dict[float, object]:
    def job(k: float):
        try:
            return setup.dn_pair(k)
        except HelmstabError as e:
            return e

    with ThreadPoolExecutor(max_workers=settings.HELMSTAB_THREADS) as pool:
        return dict(zip(ks, pool.map(job, ks)))


def zeta_ladder_extract(
    setup: Setup,
    noisy: DnMap,
    dn2: DnMap,
    k: float,
    r: float,
    report: SuiteReport,
) -> None:
    """Repeat one (r, eta) extraction over |zeta| = zeta0 * zeta_ladder and fit the error slope."""
    config = setup.config
    eta = np.eye(config.dim)[0]
    band = default_band(r, k, setup.ledger)
    cgo_C1 = setup.oracle_c1(k)
    points: List[Tuple[float, float]] = []
    for mult in config.zeta_ladder:
        z = config.zeta0 * mult
        try:
            sample = extract_fourier_sample(noisy, dn2, r, eta, k, setup.ledger, mode=config.mode, band=band,
                                            q1=setup.q1, q2=setup.q2, zeta_norm=z, strict=config.strict, cgo_C1=cgo_C1)
        except HelmstabError as e:
            logger.warning(f"Ladder extraction failed at |zeta|={z:g}: {e}")
            report.failures.append(_failure(e, r=r, zeta_norm=z))
            continue
        report.samples.append(sample)
        error = abs(sample.value - sample.truth)
        points.append((z, error))
        report.table.append({"k": k, "r": r, "zeta_norm": z, "band": band.value, "abs_error": error,
                             "error_budget": sample.error_budget})
    if len(points) >= 2 and all(e > 0 for _, e in points):
        slope = decay_slope([z for z, _ in points], [e for _, e in points])
        report.gates.append(GateResult(name="born_error_slope", passed=SLOPE_RANGE[0] <= slope <= SLOPE_RANGE[1],
                                       value=slope, threshold=SLOPE_RANGE[1]))


def run_extract(config: RunConfig) -> SuiteReport:
    """Samples for the first (k, noise) pair: one radius, its |zeta| ladder, or the full design up to the cutoff."""
    setup = Setup(config)
    report = SuiteReport(subcommand=Subcommand.EXTRACT, ledger=setup.ledger)
    k, target = config.k[0], config.noise[0]
    mode = ExtractionMode(config.mode)
    try:
        dn1, dn2 = setup.dn_pair(k)
        noisy, A_star = gap_with_noise(dn1, dn2, target, cell_rng(config.seed, 0))
        if config.radius is not None and config.ladder:
            zeta_ladder_extract(setup, noisy, dn2, k, config.radius, report)
            report.gates.append(_completion_gate("samples_extracted", len(report.samples), len(report.failures)))
            return report
        if config.radius is not None:
            r = config.radius
            design = [DesignPoint(r=r, eta=np.eye(config.dim)[0], band=default_band(r, k, setup.ledger), certified=config.strict)]
        else:
            T, _ = choose_cutoff(A_star, k, setup.ledger)
            T_used = usable_cutoff(T, setup.grid, mode)
            design = sample_design(T, k, setup.ledger, setup.grid.frequency_step, strict=config.strict, limit=T_used)
        cgo_C1 = setup.oracle_c1(k)
    except HelmstabError as e:
        report.failures.append(_failure(e, k=k, noise=target))
        report.gates.append(_completion_gate("samples_extracted", 0, 1))
        return report
    samples, failures = extract_design(noisy, dn2, design, k, setup.ledger, mode=mode, q1=setup.q1, q2=setup.q2, cgo_C1=cgo_C1)
    report.samples = samples
    report.failures.extend(failures)
    report.table.append({"k": k, "A_star": A_star, "samples": len(samples), "failed": len(failures)})
    report.gates.append(_completion_gate("samples_extracted", len(samples), len(failures)))
    origin = [s for s in samples if s.r == 0 and Band(s.band) is Band.LOW and s.truth is not None]
    if origin:
        s = origin[0]
        rel = abs(s.value - s.truth) / max(abs(s.truth), 1e-300)
        report.gates.append(GateResult(name="low_band_origin", passed=rel <= s.error_budget, value=rel, threshold=s.error_budget))
    return report


def run_reconstruct(config: RunConfig) -> Tuple[SuiteReport, Optional[ScalarField]]:
    setup = Setup(config)
    report = SuiteReport(subcommand=Subcommand.RECONSTRUCT, ledger=setup.ledger)
    k, target = config.k[0], config.noise[0]
    try:
        dns = setup.dn_pair(k)
    except HelmstabError as e:
        report.failures.append(_failure(e, k=k))
        report.gates.append(_completion_gate("reconstructed", 0, 1))
        return report, None
    record, q_rec, failures = run_cell(setup, k, target, 0, dns)
    report.failures.extend(failures)
    if record is not None:
        report.records.append(record)
    report.gates.append(_completion_gate("reconstructed", len(report.records), 0 if record is not None else 1))
    return report, q_rec


def spearman_gate(records: List[StabilityRecord]) -> Optional[GateResult]:
    """Spearman(k, err_hms) over noiseless rows; needs at least four distinct frequencies."""
    rows = sorted((r for r in records if r.noise_target == 0 and r.flagged is None), key=lambda r: r.k)
    if len({r.k for r in rows}) < 4:
        return None
    rho = float(spearmanr([r.k for r in rows], [r.err_hms for r in rows])[0])
    return GateResult(name="spearman_k_error", passed=bool(rho <= SPEARMAN_GATE), value=rho, threshold=SPEARMAN_GATE)


def run_stability_sweep(config: RunConfig) -> SuiteReport:
    """Every (k, noise) cell on the worker pool, merged in (k, noise) order, then fit-and-holdout."""
    setup = Setup(config)
    report = SuiteReport(subcommand=Subcommand.SWEEP)
    ks = sorted(set(config.k))
    targets = sorted(set(config.noise), reverse=True)
    dns = _assemble_all(setup, ks)
    cells = [(k, t) for k in ks for t in targets]

    def job(index: int):
        k, target = cells[index]
        pair = dns[k]
        if isinstance(pair, HelmstabError):
            return None, None, [_failure(pair, k=k, noise=target)]
        return run_cell(setup, k, target, index, pair)

    with ThreadPoolExecutor(max_workers=settings.HELMSTAB_THREADS) as pool:
        results = list(pool.map(job, range(len(cells))))

    records = []
    for record, _, failures in results:
        report.failures.extend(failures)
        if record is not None:
            records.append(record)

    ledger = setup.ledger
    try:
        C, holdout, violations = fit_constant(records, ledger)
    except HelmstabError as e:
        report.failures.append(e.to_dict())
        C, holdout, violations = None, [], []
    if C is not None:
        ledger = ledger.with_overrides(fitted_C=C)
        records = [_with_bound(r, ledger) for r in records]
        report.gates.append(GateResult(name="bound_holdout", passed=not violations, value=float(len(violations)),
                                       threshold=0.0, detail=f"{len(holdout)} holdout rows"))
    gate = spearman_gate(records)
    if gate is not None:
        report.gates.append(gate)
    report.gates.append(_completion_gate("cells_completed", len(records), len(cells) - len(records)))
    for r in records:
        log_inv = math.inf if r.A_star == 0 else -2 * math.log(r.A_star)
        T_rule, _ = choose_cutoff(r.A_star, r.k, ledger)
        report.table.append({"k": r.k, "A_star": r.A_star, "a_k2": ledger.a * r.k ** 2, "p_log_inv_A": ledger.p * log_inv,
                             "regime": r.regime.value, "T_rule": T_rule, "T_used": r.T_used})
    report.records = records
    report.ledger = ledger
    return report


def _with_bound(record: StabilityRecord, ledger: ConstantsLedger) -> StabilityRecord:
    lipschitz, log_term = bound_rhs(record.A_star, record.k, ledger)
    return record.model_copy(update={"lip_term": lipschitz, "log_term": log_term})
