"""Inequality verification: deficits (right side minus left side, natural-log
units), equality cases, the lambda optimization behind the KOS route, and
suites over presets x functions x alphas.
"""

import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from dataclasses import replace
from itertools import product
from typing import Literal, get_args

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.constants import DEFAULT_ALPHAS, SHANNON_ONLY_ALPHAS
from app.errors import BudgetExceededError, ConfigurationError, DomainError
from app.functionals import (
    Budgets,
    Estimate,
    FunctionalValues,
    TestFunction,
    evaluate_functionals,
    kos_rhs_estimate,
    shannon_rhs,
    shannon_rhs_error,
    shannon_via_b_rhs,
)
from app.library import build_function, check_function_id
from app.presets import Preset
from app.sharp_constants import SharpConstants, sharp_constants, with_overrides

UTC = timezone.utc
logger = structlog.get_logger(__name__)

Inequality = Literal["Shannon", "ShannonViaB", "KOS"]
INEQUALITIES: tuple[Inequality, ...] = get_args(Inequality)

_PASS_SIGMAS = 3.0
_ERROR_FLOOR_ULPS = 64.0


def _error_with_floor(error: float, lhs: float, rhs: float) -> float:
    floor = _ERROR_FLOOR_ULPS * np.finfo(float).eps * (1.0 + abs(lhs) + abs(rhs))
    return error + floor


class DeficitRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    inequality: Inequality
    function_id: str
    alpha: float
    deficit: float = Field(allow_inf_nan=False)
    error_estimate: float = Field(ge=0, allow_inf_nan=False)
    passed: bool
    preset: str = ""
    lhs: float = Field(default=0.0, allow_inf_nan=False)
    rhs: float = Field(default=0.0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _check_verdict(self) -> "DeficitRecord":
        threshold = -_PASS_SIGMAS * self.error_estimate
        # serialized reports are rounded, so a record on the threshold may flip
        on_threshold = math.isclose(self.deficit, threshold, rel_tol=1e-10)
        if self.passed != (self.deficit >= threshold) and not on_threshold:
            raise ValueError("passed must equal deficit >= -3 * error_estimate")
        return self

    @classmethod
    def from_sides(
        cls,
        inequality: Inequality,
        u: TestFunction,
        alpha: float,
        lhs: float,
        rhs: float,
        error: float,
        preset: str | None = None,
    ) -> "DeficitRecord":
        deficit = rhs - lhs
        error = _error_with_floor(error, lhs, rhs)
        record = cls(
            inequality=inequality,
            function_id=u.function_id,
            alpha=alpha,
            deficit=deficit,
            error_estimate=error,
            passed=deficit >= -_PASS_SIGMAS * error,
            preset=preset if preset is not None else _describe(u),
            lhs=lhs,
            rhs=rhs,
        )
        log = logger.bind(
            inequality=inequality,
            function_id=record.function_id,
            preset=record.preset,
            alpha=alpha,
            deficit=deficit,
            error=error,
        )
        if record.passed:
            log.debug("Deficit computed")
        else:
            log.warning("Inequality violated beyond integration error")
        return record

    @property
    def sort_key(self) -> tuple[str, str, float, str]:
        return (self.inequality, self.function_id, self.alpha, self.preset)


class SkippedRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    inequality: Inequality
    function_id: str
    alpha: float
    preset: str
    reason: str


class StructureDescriptor(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    weights: tuple[float, ...]
    q: float
    norm: str


class VerificationReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    structures: list[StructureDescriptor]
    alphas: list[float]
    functions: list[str]
    inequalities: list[Inequality]
    budgets: Budgets
    constant_overrides: dict[str, float] = Field(default_factory=dict)
    records: list[DeficitRecord] = Field(default_factory=list)
    skipped: list[SkippedRecord] = Field(default_factory=list)
    budget_exhausted: bool = False
    timestamp: datetime
    passed: bool

    @property
    def failed_records(self) -> list[DeficitRecord]:
        return [record for record in self.records if not record.passed]


def _describe(u: TestFunction) -> str:
    return f"{u.structure.describe()} {u.norm.describe()}"


def _resolve(
    u: TestFunction,
    alpha: float,
    budgets: Budgets | None,
    consts: SharpConstants | None,
    values: FunctionalValues | None,
) -> tuple[Budgets, SharpConstants, FunctionalValues]:
    budgets = budgets or Budgets()
    consts = consts or sharp_constants(u.norm, alpha)
    values = values or evaluate_functionals(u, alpha, budgets)
    return budgets, consts, values


def shannon_deficit(
    u: TestFunction,
    alpha: float,
    budgets: Budgets | None = None,
    consts: SharpConstants | None = None,
    values: FunctionalValues | None = None,
    preset: str | None = None,
) -> DeficitRecord:
    """Sharp Shannon inequality; zero exactly at E_alpha and its dilates/multiples."""
    if not alpha > 0:
        raise DomainError(f"Shannon inequality requires alpha > 0, got {alpha}")
    _, consts, values = _resolve(u, alpha, budgets, consts, values)
    rhs = shannon_rhs(values, consts)
    error = values.error_estimates.entropy + shannon_rhs_error(values)
    return DeficitRecord.from_sides("Shannon", u, alpha, values.entropy, rhs, error, preset)


def shannon_via_b_deficit(
    u: TestFunction,
    alpha: float,
    budgets: Budgets | None = None,
    consts: SharpConstants | None = None,
    values: FunctionalValues | None = None,
    preset: str | None = None,
) -> DeficitRecord:
    """Shannon inequality with the non-sharp constant B obtained through KOS."""
    if not alpha > 1:
        raise DomainError(f"The KOS route to Shannon requires alpha > 1, got {alpha}")
    _, consts, values = _resolve(u, alpha, budgets, consts, values)
    rhs = shannon_via_b_rhs(values, consts)
    error = values.error_estimates.entropy + shannon_rhs_error(values)
    return DeficitRecord.from_sides(
        "ShannonViaB", u, alpha, values.entropy, rhs, error, preset
    )


def kos_deficit(
    u: TestFunction,
    alpha: float,
    budgets: Budgets | None = None,
    consts: SharpConstants | None = None,
    values: FunctionalValues | None = None,
    preset: str | None = None,
) -> DeficitRecord:
    """KOS inequality in normalized form; zero exactly at the profile phi."""
    if not alpha > 1:
        raise DomainError(f"KOS inequality requires alpha > 1, got {alpha}")
    budgets, consts, values = _resolve(u, alpha, budgets, consts, values)
    l1 = Estimate(values.l1, values.error_estimates.l1)
    rhs = kos_rhs_estimate(u, alpha, consts, budgets, l1=l1)
    error = values.error_estimates.entropy + rhs.error
    return DeficitRecord.from_sides("KOS", u, alpha, values.entropy, rhs.value, error, preset)


DEFICITS = {
    "Shannon": shannon_deficit,
    "ShannonViaB": shannon_via_b_deficit,
    "KOS": kos_deficit,
}


class LambdaRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    lam: float
    bound: float


class LambdaScan(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float
    moment: float
    rows: list[LambdaRow]
    lambda_star: float
    grid_argmin: float
    optimal_bound: float
    closed_form: float
    consistent: bool


def pre_optimization_bound(
    q: float, log_c: float, alpha: float, moment: float, lam: float
) -> float:
    """Q ln C + Q ln(lambda + lambda^(1-alpha) * moment), valid for every lambda > 0."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    return q * log_c + q * math.log(lam + lam ** (1.0 - alpha) * moment)


def optimal_lambda(alpha: float, moment: float) -> float:
    return ((alpha - 1.0) * moment) ** (1.0 / alpha)


def lambda_scan(
    q: float,
    log_c: float,
    log_b: float,
    alpha: float,
    moment: float,
    lambdas: Iterable[float],
) -> LambdaScan:
    if not alpha > 1:
        raise DomainError(f"lambda optimization requires alpha > 1, got {alpha}")
    if not moment > 0 or math.isinf(moment):
        raise DomainError(f"lambda optimization needs a finite positive moment, got {moment}")
    grid = sorted(lambdas)
    if not grid:
        raise DomainError("lambda grid is empty")
    rows = [
        LambdaRow(lam=lam, bound=pre_optimization_bound(q, log_c, alpha, moment, lam))
        for lam in grid
    ]
    best = min(range(len(rows)), key=lambda i: rows[i].bound)
    lambda_star = optimal_lambda(alpha, moment)
    optimal = pre_optimization_bound(q, log_c, alpha, moment, lambda_star)
    closed = (q / alpha) * (log_b + math.log(moment))
    lower = grid[best - 1] if best > 0 else 0.0
    upper = grid[best + 1] if best + 1 < len(grid) else math.inf
    consistent = (
        abs(optimal - closed) <= 1e-10 * max(1.0, abs(closed))
        and rows[best].bound >= optimal - 1e-12 * max(1.0, abs(optimal))
        and lower <= lambda_star <= upper
    )
    return LambdaScan(
        alpha=alpha,
        moment=moment,
        rows=rows,
        lambda_star=lambda_star,
        grid_argmin=grid[best],
        optimal_bound=optimal,
        closed_form=closed,
        consistent=consistent,
    )


def lambda_optimization_check(
    u: TestFunction,
    alpha: float,
    lambdas: Iterable[float],
    budgets: Budgets | None = None,
) -> LambdaScan:
    """Scan the KOS-derived bound over lambda and confirm the closed-form optimum."""
    consts = sharp_constants(u.norm, alpha)
    if consts.log_c is None or consts.log_b is None:
        raise DomainError(f"lambda optimization requires alpha > 1, got {alpha}")
    values = evaluate_functionals(u, alpha, budgets)
    moment = values.moment_alpha / values.l1
    return lambda_scan(u.structure.q, consts.log_c, consts.log_b, alpha, moment, lambdas)


class SuiteConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    presets: list[Preset]
    functions: list[str]
    alphas: list[float] = Field(default_factory=list)
    inequalities: list[Inequality] = Field(default_factory=lambda: list(INEQUALITIES))
    budgets: Budgets = Field(default_factory=Budgets)
    constant_overrides: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self) -> "SuiteConfig":
        if any(not alpha > 0 for alpha in self.alphas):
            raise ValueError("every alpha must be positive")
        return self

    @property
    def alpha_grid(self) -> list[float]:
        return list(self.alphas) or default_alphas(self.inequalities)


def default_alphas(inequalities: Sequence[str]) -> list[float]:
    if "KOS" in inequalities:
        return list(DEFAULT_ALPHAS)
    return sorted(SHANNON_ONLY_ALPHAS + DEFAULT_ALPHAS)


class CaseOutcome(BaseModel):
    preset: str
    function_id: str
    alpha: float
    records: dict[str, DeficitRecord] = Field(default_factory=dict)
    skipped: dict[str, SkippedRecord] = Field(default_factory=dict)


def evaluate_case(
    preset: Preset,
    function_id: str,
    alpha: float,
    inequalities: Sequence[Inequality],
    budgets: Budgets,
    overrides: dict[str, float],
) -> CaseOutcome:
    """Every requested deficit for one (preset, function, alpha); functionals are
    computed once and shared. Domain errors become skipped entries.
    """
    outcome = CaseOutcome(preset=preset.label, function_id=function_id, alpha=alpha)

    def skip(inequality: Inequality, reason: str) -> None:
        outcome.skipped[inequality] = SkippedRecord(
            inequality=inequality,
            function_id=function_id,
            alpha=alpha,
            preset=preset.label,
            reason=reason,
        )

    try:
        u = build_function(function_id, preset.norm, alpha)
        u = _rename(u, function_id)
        consts = with_overrides(sharp_constants(preset.norm, alpha), overrides)
        values = evaluate_functionals(u, alpha, budgets)
    except DomainError as e:
        for inequality in inequalities:
            skip(inequality, str(e))
        return outcome
    for inequality in inequalities:
        try:
            outcome.records[inequality] = DEFICITS[inequality](
                u, alpha, budgets, consts, values, preset.label
            )
        except DomainError as e:
            skip(inequality, str(e))
    return outcome


def _rename(u: TestFunction, function_id: str) -> TestFunction:
    return replace(u, function_id=function_id)


def _validate(config: SuiteConfig) -> None:
    for function_id in config.functions:
        check_function_id(function_id)
    unknown = set(config.constant_overrides) - {"A", "B", "C"}
    if unknown:
        raise ConfigurationError(f"Unknown constant overrides {sorted(unknown)}")


def _run_cases(config: SuiteConfig) -> tuple[list[CaseOutcome], bool]:
    cases = list(product(config.presets, config.functions, config.alpha_grid))

    def run(case: tuple[Preset, str, float]) -> CaseOutcome:
        preset, function_id, alpha = case
        return evaluate_case(
            preset,
            function_id,
            alpha,
            config.inequalities,
            config.budgets,
            config.constant_overrides,
        )

    outcomes: list[CaseOutcome] = []
    try:
        if config.budgets.workers > 1:
            with ThreadPoolExecutor(max_workers=config.budgets.workers) as pool:
                futures = [pool.submit(run, case) for case in cases]
                try:
                    for future in futures:
                        outcomes.append(future.result())
                except BudgetExceededError:
                    for future in futures:
                        future.cancel()
                    raise
        else:
            for case in cases:
                outcomes.append(run(case))
    except BudgetExceededError as e:
        logger.bind(completed=len(outcomes), total=len(cases), partial=e.partial.value).error(
            "Integration budget exhausted, returning partial results"
        )
        return outcomes, True
    return outcomes, False


def run_suite(config: SuiteConfig) -> VerificationReport:
    _validate(config)
    outcomes, exhausted = _run_cases(config)
    records = sorted(
        (record for outcome in outcomes for record in outcome.records.values()),
        key=lambda record: record.sort_key,
    )
    skipped = sorted(
        (entry for outcome in outcomes for entry in outcome.skipped.values()),
        key=lambda entry: (entry.inequality, entry.function_id, entry.alpha, entry.preset),
    )
    report = VerificationReport(
        structures=[
            StructureDescriptor(
                label=preset.label,
                weights=preset.norm.structure.weights,
                q=preset.norm.structure.q,
                norm=preset.norm.describe(),
            )
            for preset in config.presets
        ],
        alphas=config.alpha_grid,
        functions=list(config.functions),
        inequalities=list(config.inequalities),
        budgets=config.budgets,
        constant_overrides=dict(config.constant_overrides),
        records=records,
        skipped=skipped,
        budget_exhausted=exhausted,
        timestamp=datetime.now(UTC),
        passed=all(record.passed for record in records) and not exhausted,
    )
    logger.bind(
        records=len(records),
        failed=len(report.failed_records),
        skipped=len(skipped),
        budget_exhausted=exhausted,
    ).info("Verification suite finished")
    return report


class ScanRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    preset: str
    function_id: str
    alpha: float
    inequality: Inequality
    lhs: float | None
    rhs: float | None
    deficit: float | None
    error_estimate: float | None
    passed: bool | None
    status: Literal["ok", "skipped"]


def scan(config: SuiteConfig) -> list[ScanRow]:
    """Long-form (preset, function, alpha, inequality) rows in configuration order.

    Raises BudgetExceededError instead of returning a partial dataset.
    """
    _validate(config)
    rows = []
    for preset, function_id, alpha in product(
        config.presets, config.functions, config.alpha_grid
    ):
        outcome = evaluate_case(
            preset, function_id, alpha, config.inequalities, config.budgets,
            config.constant_overrides,
        )
        for inequality in config.inequalities:
            record = outcome.records.get(inequality)
            if record is None:
                rows.append(
                    ScanRow(
                        preset=preset.label, function_id=function_id, alpha=alpha,
                        inequality=inequality, lhs=None, rhs=None, deficit=None,
                        error_estimate=None, passed=None, status="skipped",
                    )
                )
                continue
            rows.append(
                ScanRow(
                    preset=preset.label,
                    function_id=function_id,
                    alpha=alpha,
                    inequality=inequality,
                    lhs=record.lhs,
                    rhs=record.rhs,
                    deficit=record.deficit,
                    error_estimate=record.error_estimate,
                    passed=record.passed,
                    status="ok",
                )
            )
    return rows
