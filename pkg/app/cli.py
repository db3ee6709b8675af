"""Command-line front end.

Exit codes: 0 success, 1 failed records (or disagreeing sphere routes, or an
invalid report under `validate`), 2 configuration error or a non-finite
integrand, 3 integration budget exhausted (a partial report is still written).
"""

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import orjson
import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.constants import (
    DEFAULT_FUNCTIONS,
    DEFAULT_PRESETS,
    EXIT_BUDGET,
    EXIT_CONFIGURATION,
    EXIT_FAILED_RECORDS,
    EXIT_OK,
)
from app.errors import BudgetExceededError, ConfigurationError, DomainError, IntegrandError
from app.functionals import Budgets
from app.integrate import compare_sphere_measures
from app.logger import prepare_logger
from app.presets import Preset, inline_preset, object_preset, resolve_preset
from app.reports import (
    OutputFormat,
    render_constants,
    render_report,
    render_scan,
    render_spheres,
    report_diagnostics,
    write_output,
)
from app.settings import settings
from app.sharp_constants import constant_comparison_table
from app.verify import (
    INEQUALITIES,
    Inequality,
    SuiteConfig,
    default_alphas,
    run_suite,
    scan,
)

logger = structlog.get_logger(__name__)


class CliConfig(BaseModel):
    """Everything a subcommand needs; loaded from `--config` and then overridden
    by flags. Unknown keys are rejected.
    """

    model_config = ConfigDict(extra="forbid")

    presets: list[str] = Field(default_factory=list)
    # preset objects: {"label": ..., "weights": [...], "norm": {...}}
    structures: list[dict[str, Any]] = Field(default_factory=list)
    weights: list[float] | None = None
    norm: str | None = None
    alphas: list[float] = Field(default_factory=list)
    functions: list[str] = Field(default_factory=lambda: list(DEFAULT_FUNCTIONS))
    inequalities: list[Inequality] = Field(default_factory=lambda: list(INEQUALITIES))
    samples: int | None = None
    rel_tol: float | None = None
    seed: int | None = None
    workers: int | None = None
    format: OutputFormat = "json"
    out: Path | None = None
    constant_overrides: dict[str, float] = Field(default_factory=dict)

    def resolve_presets(self) -> list[Preset]:
        if self.weights:
            return [inline_preset(tuple(self.weights), self.norm)]
        resolved = [resolve_preset(name, self.norm) for name in self.presets]
        resolved += [object_preset(data) for data in self.structures]
        return resolved or [resolve_preset(name, self.norm) for name in DEFAULT_PRESETS]

    def budgets(self) -> Budgets:
        overrides = {
            "samples": self.samples,
            "rel_tol": self.rel_tol,
            "seed": self.seed,
            "workers": self.workers,
        }
        try:
            return Budgets(**{k: v for k, v in overrides.items() if v is not None})
        except ValidationError as e:
            raise ConfigurationError(f"Invalid budgets: {e}") from e

    def suite(self) -> SuiteConfig:
        try:
            return SuiteConfig(
                presets=self.resolve_presets(),
                functions=self.functions,
                alphas=self.alphas,
                inequalities=self.inequalities,
                budgets=self.budgets(),
                constant_overrides=self.constant_overrides,
            )
        except ValidationError as e:
            raise ConfigurationError(f"Invalid suite configuration: {e}") from e


def _parse_override(text: str) -> tuple[str, float]:
    key, sep, raw = text.partition("=")
    if not sep:
        raise ConfigurationError(f"Constant override must look like A=1.0, got {text!r}")
    try:
        return key.strip().upper(), float(raw)
    except ValueError as e:
        raise ConfigurationError(f"Non-numeric constant override {text!r}") from e


def _load_config_file(path: Path) -> dict[str, object]:
    try:
        data = orjson.loads(path.read_bytes())
    except (OSError, orjson.JSONDecodeError) as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config {path} must hold a JSON object")
    return data


def build_config(args: argparse.Namespace) -> CliConfig:
    data: dict[str, object] = {}
    if args.config is not None:
        data = _load_config_file(args.config)
    flags: dict[str, object] = {
        "presets": args.preset,
        "weights": args.weights,
        "norm": args.norm,
        "alphas": args.alpha,
        "functions": args.functions,
        "inequalities": args.inequality,
        "samples": args.samples,
        "rel_tol": args.rel_tol,
        "seed": args.seed,
        "workers": args.workers,
        "format": args.format,
        "out": args.out,
    }
    if args.constant_override:
        flags["constant_overrides"] = dict(map(_parse_override, args.constant_override))
    data.update({key: value for key, value in flags.items() if value is not None})
    try:
        return CliConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e


def _weights(text: str) -> list[float]:
    try:
        return [float(w) for w in text.replace(" ", ",").split(",") if w]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid weight list {text!r}") from e


def _cmd_constants(config: CliConfig) -> int:
    presets = config.resolve_presets()
    alphas = config.alphas or default_alphas(("Shannon",))
    rows = constant_comparison_table([(p.label, p.norm) for p in presets], alphas)
    write_output(render_constants(rows, config.format), config.out, sys.stdout)
    return EXIT_OK


def _cmd_sphere(config: CliConfig) -> int:
    budgets = config.budgets()
    rows = [
        compare_sphere_measures(
            preset.norm,
            samples=budgets.samples,
            seed=budgets.seed,
            workers=budgets.workers,
            label=preset.label,
        )
        for preset in config.resolve_presets()
    ]
    write_output(render_spheres(rows, config.format), config.out, sys.stdout)
    return EXIT_OK if all(row.agreement for row in rows) else EXIT_FAILED_RECORDS


def _cmd_verify(config: CliConfig) -> int:
    report = run_suite(config.suite())
    write_output(render_report(report, config.format), config.out, sys.stdout)
    if report.budget_exhausted:
        return EXIT_BUDGET
    return EXIT_OK if report.passed else EXIT_FAILED_RECORDS


def _cmd_scan(config: CliConfig) -> int:
    rows = scan(config.suite())
    write_output(render_scan(rows, config.format), config.out, sys.stdout)
    return EXIT_OK


COMMANDS = {
    "constants": _cmd_constants,
    "sphere": _cmd_sphere,
    "verify": _cmd_verify,
    "scan": _cmd_scan,
}


def _cmd_validate(path: Path) -> int:
    diagnostics = report_diagnostics(path)
    summary = {"path": str(path), "diagnostics": len(diagnostics), "errors": diagnostics}
    sys.stdout.write(orjson.dumps(summary, option=orjson.OPT_INDENT_2).decode() + "\n")
    return EXIT_OK if not diagnostics else EXIT_FAILED_RECORDS


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with CliConfig fields")
    common.add_argument(
        "--preset",
        action="append",
        help="abelian:N | heisenberg | anisotropic:w1,w2,... with optional @<norm>",
    )
    common.add_argument("--weights", type=_weights, help="inline dilation weights, e.g. 1,1,2")
    common.add_argument("--norm", help="p:<val> | max | koranyi")
    common.add_argument("--alpha", action="append", type=float)
    common.add_argument("--functions", action="extend", nargs="+", help="test-function ids")
    common.add_argument("--inequality", action="append", choices=INEQUALITIES)
    common.add_argument("--samples", type=int)
    common.add_argument("--rel-tol", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--out", type=Path)
    common.add_argument(
        "--constant-override",
        action="append",
        metavar="NAME=VALUE",
        help="unstable: replace A, C or B in the right sides (negative-path testing)",
    )

    parser = argparse.ArgumentParser(
        prog="anisotropic-shannon",
        description="Sharp constants and numerical verification of the anisotropic "
        "Shannon and Kubo-Ogawa-Suguro inequalities",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("constants", parents=[common], help="table of A, C, B")
    subparsers.add_parser("sphere", parents=[common], help="quasi-sphere measure routes")
    subparsers.add_parser("verify", parents=[common], help="run the verification suite")
    subparsers.add_parser("scan", parents=[common], help="long-form deficit dataset")
    validate = subparsers.add_parser("validate", help="check a JSON report against the schema")
    validate.add_argument("path", type=Path)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    prepare_logger(settings.log_level)
    args = build_parser().parse_args(argv)
    log = logger.bind(command=args.command)
    try:
        if args.command == "validate":
            return _cmd_validate(args.path)
        config = build_config(args)
        return COMMANDS[args.command](config)
    except (ConfigurationError, DomainError) as e:
        log.error("Invalid configuration", error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIGURATION
    except BudgetExceededError as e:
        log.error("Integration budget exhausted", error=str(e), partial=e.partial.value)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except IntegrandError as e:
        log.error("Integrand returned non-finite values", error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIGURATION
