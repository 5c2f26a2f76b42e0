from typing import Any, Callable, Dict, Optional, Tuple
import logging

from core.born_fourier import write_samples
from core.errors import HelmstabError, describe
from core.models import ScalarField
from core.serialization import save_dn, save_field, write_dn_csv, write_field_csv
from experiments import suites
from utils.config import settings
from utils.run_manager import RunManager, get_run_manager
from . import models

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_IO = 2

Handler = Callable[[models.RunConfig], Tuple[models.SuiteReport, Optional[ScalarField]]]


def _plain(run: Callable[[models.RunConfig], models.SuiteReport]) -> Handler:
    def handler(config: models.RunConfig):
        return run(config), None

    return handler


routes: Dict[models.Subcommand, Handler] = {
    models.Subcommand.CHECK_DN: _plain(suites.run_check_dn),
    models.Subcommand.CHECK_IDENTITY: _plain(suites.run_identity_check),
    models.Subcommand.CHECK_CGO: _plain(suites.run_cgo_suite),
    models.Subcommand.EXTRACT: _plain(suites.run_extract),
    models.Subcommand.RECONSTRUCT: suites.run_reconstruct,
    models.Subcommand.SWEEP: _plain(suites.run_stability_sweep),
}


def build_manifest(report: models.SuiteReport, config: models.RunConfig) -> Dict[str, Any]:
    config_json = config.model_dump(mode="json")
    manifest: Dict[str, Any] = {
        "app": settings.APP_NAME,
        "version": settings.VERSION,
        "subcommand": report.subcommand.value,
        "run_id": RunManager.run_id(config_json),
        "config": config_json,
        "seed": config.seed,
        "ledger": report.ledger.model_dump(mode="json") if report.ledger else None,
        "gates": [g.model_dump(mode="json") for g in report.gates],
        "errors": report.failures,
        "artifacts": report.artifacts,
        "passed": report.passed,
    }
    failed = [g.name for g in report.gates if not g.passed]
    if failed:
        manifest["failures"] = failed
    return manifest


def emit_outputs(
    report: models.SuiteReport,
    config: models.RunConfig,
    field: Optional[ScalarField] = None,
    manager: Optional[RunManager] = None,
) -> int:
    """Write every artifact of a report plus the manifest; returns the process exit code."""
    try:
        manager = manager or get_run_manager(config.out)
        sub = report.subcommand
        if sub in (models.Subcommand.SWEEP, models.Subcommand.RECONSTRUCT):
            report.artifacts["records"] = str(manager.write_records(report.records))
        if report.table:
            report.artifacts["table"] = str(manager.write_table(report.table, f"{sub.value}.csv"))
        if sub is models.Subcommand.EXTRACT:
            with manager.open_text("samples.csv") as fh:
                write_samples(report.samples, fh, config.dim)
            report.artifacts["samples"] = str(manager.path("samples.csv"))
        for dn in report.dn_maps:
            name = f"dn_k{dn.k:g}"
            save_dn(dn, manager.path(f"{name}.bin"))
            with manager.open_text(f"{name}.csv") as fh:
                write_dn_csv(dn, fh)
            report.artifacts[name] = str(manager.path(f"{name}.bin"))
        if report.diagnostics:
            report.artifacts["diagnostics"] = str(manager.write_manifest({"solutions": report.diagnostics}, "cgo_diagnostics.json"))
        if field is not None:
            save_field(field, manager.path("q_rec.bin"))
            with manager.open_text("q_rec.csv") as fh:
                write_field_csv(field, fh)
            report.artifacts["field"] = str(manager.path("q_rec.bin"))
        manager.write_manifest(build_manifest(report, config))
    except OSError as e:
        logger.error(f"Could not write outputs: {e}", exc_info=True)
        return EXIT_IO
    if not report.passed:
        logger.warning(f"Gates failed: {[g.name for g in report.gates if not g.passed]}")
        return EXIT_GATE_FAILED
    return EXIT_OK


def dispatch(subcommand: models.Subcommand, config: models.RunConfig) -> int:
    """Run one subcommand end to end; any exception becomes a recorded failure and a failed gate."""
    handler = routes[models.Subcommand(subcommand)]
    logger.info(f"Running {subcommand.value} (seed={config.seed}, out={config.out})")
    try:
        report, field = handler(config)
    except Exception as e:
        verb = "aborted" if isinstance(e, HelmstabError) else "crashed"
        logger.error(f"{subcommand.value} {verb}: {e!r}", exc_info=True)
        report = models.SuiteReport(subcommand=subcommand, failures=[describe(e)])
        report.gates.append(models.GateResult(name="completed", passed=False, detail=str(e)))
        field = None
    return emit_outputs(report, config, field)

