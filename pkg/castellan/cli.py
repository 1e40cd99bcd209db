"""CLI interface for castellan using Click and Rich."""

import logging
import sys
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape

from castellan.audit import CertificateAuditor
from castellan.config import (
    APP_NAME,
    APP_VERSION,
    EXIT_FAILURE,
    EXIT_USAGE,
    STYLE_DIM,
    STYLE_ERROR,
    STYLE_SUCCESS,
    STYLE_WARNING,
)
from castellan.exceptions import (
    CastellanError,
    CertificateError,
    CertificateSchemaError,
    ConfigError,
    RationalParseError,
    SeriesNotFoundError,
)
from castellan.experiment import load_experiment
from castellan.formatters import audit_table, certificate_table, series_table
from castellan.repository import CertificateStore
from castellan.service import PipelineService

console = Console()
err_console = Console(stderr=True)


def configure_logging(verbosity: int) -> None:
    """WARNING by default, INFO with -v and DEBUG with -vv, always on stderr."""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False, rich_tracebacks=True)],
        force=True,
    )


def get_service() -> PipelineService:
    """Create and return a PipelineService instance."""
    return PipelineService()


def get_store() -> CertificateStore:
    return CertificateStore()


def _fail(label: str, error: CastellanError, code: int = EXIT_FAILURE) -> None:
    err_console.print(f"[{STYLE_ERROR}]✗ {label}:[/{STYLE_ERROR}] {escape(str(error))}", highlight=False)
    sys.exit(code)


@click.group()
@click.option("--verbose", "-v", count=True, help="Log progress (-v) or details (-vv) to stderr.")
@click.version_option(version=APP_VERSION, prog_name=APP_NAME)
@click.pass_context
def cli(ctx: click.Context, verbose: int) -> None:
    """castellan: certified castles, Følner sets and profinite witnesses."""
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose
    configure_logging(verbose)


@cli.command("run")
@click.argument("config_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write the certificate here instead of stdout.")
@click.option("--timing", is_flag=True, help="Record wall-clock time (breaks byte-identity).")
def run_experiment(config_path: Path, output: Path | None, timing: bool) -> None:
    """Run the pipeline named in CONFIG_PATH and emit its certificate."""
    try:
        config = load_experiment(config_path)
        certificate = get_service().run(config, timing=timing)
        store = get_store()
        if output is None:
            click.echo(store.dumps(certificate), nl=False)
        else:
            store.save(certificate, output)
            console.print(certificate_table(store.to_payload(certificate)))
            console.print(f"[{STYLE_SUCCESS}]✓ Certificate written[/{STYLE_SUCCESS}] to {output}")
        if not certificate.passed:
            err_console.print(
                f"[{STYLE_WARNING}]⚠ Pipeline {config.pipeline} did not pass.[/{STYLE_WARNING}]"
            )
            sys.exit(EXIT_FAILURE)
    except (ConfigError, RationalParseError) as e:
        _fail("Invalid configuration", e, EXIT_USAGE)
    except CertificateError as e:
        _fail("Certificate error", e)
    except CastellanError as e:
        _fail("Error", e)


@cli.command("verify")
@click.argument("certificate_path", type=click.Path(dir_okay=False, path_type=Path))
def verify_certificate(certificate_path: Path) -> None:
    """Re-check every claim of a certificate without rebuilding it."""
    try:
        payload = get_store().load(certificate_path)
    except CertificateSchemaError as e:
        _fail("Schema violation", e, EXIT_USAGE)
    except CertificateError as e:
        _fail("Certificate error", e)
    result = CertificateAuditor(get_store()).verify(payload, str(certificate_path))
    console.print(audit_table(result))
    if result.passed:
        console.print(f"[{STYLE_SUCCESS}]✓ All claims verified.[/{STYLE_SUCCESS}]")
        return
    err_console.print(f"[{STYLE_ERROR}]✗ Verification failed at the {result.stage} stage.[/{STYLE_ERROR}]")
    sys.exit(EXIT_USAGE if result.stage == "schema" else EXIT_FAILURE)


@cli.command("export")
@click.argument("certificate_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--series", "-s", "series_name", required=True, help="Name of the series to export.")
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path), required=True,
              help="CSV file to write.")
def export_series(certificate_path: Path, series_name: str, output: Path) -> None:
    """Export one data series of a certificate as CSV."""
    try:
        store = get_store()
        payload = store.load(certificate_path)
        count = store.export_csv(payload, series_name, output)
        console.print(f"[{STYLE_SUCCESS}]✓ Exported {count} row(s)[/{STYLE_SUCCESS}] to {output}")
    except CertificateSchemaError as e:
        _fail("Schema violation", e, EXIT_USAGE)
    except SeriesNotFoundError as e:
        _fail("Series not found", e)
    except CertificateError as e:
        _fail("Export failed", e)


@cli.command("show")
@click.argument("certificate_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--series", "-s", "series_name", default=None, help="Also print this series.")
def show_certificate(certificate_path: Path, series_name: str | None) -> None:
    """Summarize a certificate without verifying it."""
    try:
        store = get_store()
        payload = store.load(certificate_path)
        console.print(certificate_table(payload))
        if series_name is not None:
            available = store.series_names(payload)
            if series_name not in available:
                raise SeriesNotFoundError(series_name, available)
            console.print(series_table(series_name, payload["outputs"]["series"][series_name]))
        else:
            console.print(f"[{STYLE_DIM}]Use 'castellan verify' to re-check the claims.[/{STYLE_DIM}]")
    except CertificateSchemaError as e:
        _fail("Schema violation", e, EXIT_USAGE)
    except SeriesNotFoundError as e:
        _fail("Series not found", e)
    except CertificateError as e:
        _fail("Certificate error", e)


if __name__ == "__main__":
    cli()
