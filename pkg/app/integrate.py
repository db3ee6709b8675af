"""Radial quadrature against r^(Q-1), quasi-Monte-Carlo integration over R^N and
the unit quasi-sphere measure |S|.
"""

import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal, get_args

import numpy as np
import numpy.typing as npt
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import quad
from scipy.stats import qmc
from scipy.stats import t as student_t
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from app.dilation import DilationStructure, Point, QuasiNorm
from app.errors import (
    BudgetExceededError,
    ConfigurationError,
    DomainError,
    IntegrandError,
)
from app.settings import settings
from app.specfun import log_beta, log_gamma

logger = structlog.get_logger(__name__)

SphereMethod = Literal["analytic", "ball_volume_mc", "gauss_weight_mc"]
PointFunction = Callable[[Point], npt.NDArray[np.float64]]

# Gauss-Kronrod nodes per subinterval in QUADPACK's QAGS
_EVALS_PER_SUBINTERVAL = 21
_MAX_NONFINITE_FRACTION = 1e-4
_UNIT_EPS = 2.0**-53
_MAX_EXP_ARGUMENT = 700.0


@dataclass(frozen=True)
class IntegrationResult:
    value: float
    abs_error_estimate: float
    evaluations: int

    def __add__(self, other: "IntegrationResult") -> "IntegrationResult":
        return IntegrationResult(
            self.value + other.value,
            self.abs_error_estimate + other.abs_error_estimate,
            self.evaluations + other.evaluations,
        )

    def scaled(self, factor: float) -> "IntegrationResult":
        return IntegrationResult(
            self.value * factor, self.abs_error_estimate * abs(factor), self.evaluations
        )


@dataclass(frozen=True)
class RadialIntegrand:
    """g(r) integrated against r^(Q-1) dr on (0, inf).

    `scale` is a characteristic radius of g; it is where the finite head
    interval ends and the exponentially substituted tail begins.
    """

    evaluator: Callable[[float], float]
    q: float
    scale: float = 1.0


class SphereMeasure(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float = Field(gt=0)
    log_value: float
    method: SphereMethod
    std_error: float = Field(ge=0)

    @model_validator(mode="after")
    def _check_error(self) -> "SphereMeasure":
        if self.method == "analytic" and self.std_error != 0:
            raise ValueError("analytic sphere measures carry no standard error")
        return self


class _NotConverged(Exception):
    def __init__(self, result: IntegrationResult, message: str) -> None:
        super().__init__(message)
        self.result = result


def _max_attempts(max_evaluations: int) -> int:
    first = _EVALS_PER_SUBINTERVAL * settings.quad_limit
    return max(1, int(math.log2(max_evaluations / first + 1)))


def _quad_segment(
    func: Callable[[float], float],
    a: float,
    b: float,
    rel_tol: float,
    abs_tol: float,
    max_evaluations: int,
) -> IntegrationResult:
    spent = 0
    try:
        for attempt in Retrying(
            stop=stop_after_attempt(_max_attempts(max_evaluations)),
            retry=retry_if_exception_type(_NotConverged),
            reraise=True,
        ):
            with attempt:
                limit = settings.quad_limit * 2 ** (attempt.retry_state.attempt_number - 1)
                out = quad(
                    func, a, b, epsabs=abs_tol, epsrel=rel_tol, limit=limit, full_output=1
                )
                value, abserr, info = float(out[0]), float(out[1]), out[2]
                spent += int(info["neval"])
                result = IntegrationResult(value, abserr, spent)
                target = max(abs_tol, rel_tol * abs(value))
                if abserr <= 100 * target:
                    return result
                message = out[3] if len(out) > 3 else ""
                if "roundoff" in message and abserr <= math.sqrt(rel_tol) * abs(value):
                    logger.bind(a=a, b=b, value=value, abserr=abserr).warning(
                        "Quadrature hit the roundoff limit, accepting result"
                    )
                    return result
                logger.bind(a=a, b=b, limit=limit, abserr=abserr).debug(
                    "Quadrature not converged, raising subdivision limit"
                )
                raise _NotConverged(result, message)
    except _NotConverged as e:
        raise BudgetExceededError(
            f"Radial quadrature on [{a}, {b}] did not converge within "
            f"{max_evaluations} evaluations",
            partial=e.result,
        ) from e
    raise AssertionError("unreachable")


def radial_integral(
    f: RadialIntegrand,
    rel_tol: float | None = None,
    max_evaluations: int | None = None,
) -> IntegrationResult:
    """Integral of g(r) r^(Q-1) over (0, inf).

    The head [0, R] is integrated directly; the tail is mapped by r = e^t - 1
    so algebraic decay becomes exponential in t. g(r) == 0 contributes 0 even
    where the polar weight overflows.
    """
    rel_tol = settings.rel_tol if rel_tol is None else rel_tol
    max_evaluations = (
        settings.max_evaluations if max_evaluations is None else max_evaluations
    )
    if not 0 < rel_tol <= 1e-2:
        raise DomainError(f"rel_tol must lie in (0, 1e-2], got {rel_tol}")
    g, q, cut = f.evaluator, f.q, f.scale

    def head(r: float) -> float:
        value = float(g(r))
        if value == 0:
            return 0.0
        return value * r ** (q - 1.0)

    def tail(t: float) -> float:
        if t > _MAX_EXP_ARGUMENT:
            return 0.0
        r = math.expm1(t)
        value = float(g(r))
        if value == 0:
            return 0.0
        # log-space: the polar weight and a power-law profile overflow separately
        log_magnitude = math.log(abs(value)) + (q - 1.0) * math.log(r) + math.log1p(r)
        return math.copysign(math.exp(log_magnitude), value)

    with np.errstate(over="ignore", under="ignore"):
        head_result = _quad_segment(head, 0.0, cut, rel_tol, 0.0, max_evaluations)
        tail_abs_tol = max(rel_tol * abs(head_result.value) * 1e-2, 1e-300)
        tail_result = _quad_segment(
            tail, math.log1p(cut), math.inf, rel_tol, tail_abs_tol, max_evaluations
        )
    result = head_result + tail_result
    logger.bind(q=q, scale=cut, value=result.value, error=result.abs_error_estimate).debug(
        "Radial integral evaluated"
    )
    return result


def _heavy_tailed_nodes(
    s: DilationStructure, u: npt.NDArray[np.float64], scale: float
) -> tuple[Point, npt.NDArray[np.float64]]:
    """Map unit-cube nodes to R^N coordinate-wise through Student-t quantiles.

    Coordinate i uses df = 1 + 1/nu_i and spread scale^nu_i, so heavier
    coordinates (which a dilation stretches more) get heavier tails.
    Returns nodes and importance weights 1/density.
    """
    weights = s.weight_array
    df = 1.0 + 1.0 / weights
    spread = scale**weights
    z = student_t.ppf(np.clip(u, _UNIT_EPS, 1.0 - _UNIT_EPS), df)
    log_density = np.sum(student_t.logpdf(z, df) - np.log(spread), axis=-1)
    return spread * z, np.exp(-log_density)


def _qmc_replicate(
    s: DilationStructure,
    fs: Sequence[PointFunction],
    m: int,
    seed: np.random.SeedSequence,
    scale: float,
) -> tuple[npt.NDArray[np.float64], int]:
    sampler = qmc.Sobol(d=s.n, scramble=True, seed=np.random.default_rng(seed))
    x, w = _heavy_tailed_nodes(s, sampler.random_base2(m), scale)
    means = np.empty(len(fs))
    nonfinite = 0
    for k, f in enumerate(fs):
        with np.errstate(all="ignore"):
            values = np.asarray(f(x), dtype=np.float64) * w
        bad = ~np.isfinite(values)
        nonfinite += int(np.count_nonzero(bad))
        means[k] = np.mean(np.where(bad, 0.0, values))
    return means, nonfinite


def qmc_integrals(
    s: DilationStructure,
    fs: Sequence[PointFunction],
    samples: int | None = None,
    seed: int | None = None,
    scale: float = 1.0,
    replicates: int | None = None,
    workers: int | None = None,
) -> list[IntegrationResult]:
    """Integrate several functions over R^N on one shared randomized Sobol set.

    `samples` is the total node budget, split into `replicates` independently
    scrambled sequences of 2^m points each. Replicate seeds are spawned from
    `seed`, and replicate means are reduced in replicate order, so a thread
    pool gives the same bits as a serial run.
    """
    samples = settings.qmc_samples if samples is None else samples
    seed = settings.seed if seed is None else seed
    replicates = settings.qmc_replicates if replicates is None else replicates
    workers = settings.workers if workers is None else workers
    if samples < 2**10:
        raise DomainError(f"QMC needs at least 2^10 samples, got {samples}")
    if not 2 <= replicates <= samples // 2:
        raise DomainError(f"Invalid replicate count {replicates} for {samples} samples")
    m = int(math.floor(math.log2(samples / replicates)))
    children = np.random.SeedSequence(seed).spawn(replicates)

    def run(child: np.random.SeedSequence) -> tuple[npt.NDArray[np.float64], int]:
        return _qmc_replicate(s, fs, m, child, scale)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run, children))
    else:
        outputs = [run(child) for child in children]

    nodes = replicates * 2**m
    nonfinite = sum(count for _, count in outputs)
    if nonfinite > _MAX_NONFINITE_FRACTION * nodes * len(fs):
        raise IntegrandError(
            f"Integrand returned non-finite values at {nonfinite} of {nodes} nodes"
        )
    if nonfinite:
        logger.bind(nonfinite=nonfinite, nodes=nodes).warning(
            "Dropped non-finite integrand values"
        )
    means = np.stack([replicate_means for replicate_means, _ in outputs])
    values = means.mean(axis=0)
    errors = means.std(axis=0, ddof=1) / math.sqrt(replicates)
    return [
        IntegrationResult(float(v), float(e), nodes) for v, e in zip(values, errors)
    ]


def qmc_integral(
    s: DilationStructure,
    f: PointFunction,
    samples: int | None = None,
    seed: int | None = None,
    scale: float = 1.0,
    replicates: int | None = None,
    workers: int | None = None,
) -> IntegrationResult:
    return qmc_integrals(
        s, [f], samples=samples, seed=seed, scale=scale, replicates=replicates,
        workers=workers,
    )[0]


def _log_unit_ball_volume(d: int) -> float:
    return 0.5 * d * math.log(math.pi) - log_gamma(0.5 * d + 1.0)


def _analytic_log_sphere(qn: QuasiNorm) -> float:
    s = qn.structure
    if qn.is_euclidean:
        return math.log(2.0) + 0.5 * s.n * math.log(math.pi) - log_gamma(0.5 * s.n)
    log_q = math.log(s.q)
    match qn.variant:
        case "weighted_p":
            assert qn.p is not None
            p = qn.p
            log_volume = (
                s.n * math.log(2.0)
                + sum(log_gamma(1.0 + w / p) for w in s.weights)
                - log_gamma(1.0 + s.q / p)
            )
        case "max":
            log_volume = s.n * math.log(2.0)
        case "koranyi":
            assert qn.layers is not None
            m, k = len(qn.layers[0]), len(qn.layers[1])
            log_volume = (
                _log_unit_ball_volume(k)
                + math.log(m)
                + _log_unit_ball_volume(m)
                + log_beta(m / 4.0, k / 2.0 + 1.0)
                - math.log(4.0)
            )
    return log_q + log_volume


def sphere_measure(
    qn: QuasiNorm,
    method: str = "analytic",
    samples: int | None = None,
    seed: int | None = None,
    workers: int | None = None,
) -> SphereMeasure:
    """|S| by closed form, by Q * vol(unit ball), or by the Gaussian-weight identity
    |S| = 2 * integral(exp(-|x|^2)) / Gamma(Q/2).
    """
    if method not in get_args(SphereMethod):
        raise ConfigurationError(f"Unknown sphere-measure method {method!r}")
    s = qn.structure
    if method == "analytic":
        log_value = _analytic_log_sphere(qn)
        return SphereMeasure(
            value=math.exp(log_value), log_value=log_value, method="analytic",
            std_error=0.0,
        )
    if method == "ball_volume_mc":
        integral = qmc_integral(
            s, lambda x: (qn(x) < 1.0).astype(np.float64), samples, seed,
            workers=workers,
        )
        measure = integral.scaled(s.q)
    else:
        integral = qmc_integral(
            s, lambda x: np.exp(-qn(x) ** 2), samples, seed, workers=workers
        )
        measure = integral.scaled(2.0 * math.exp(-log_gamma(s.q / 2.0)))
    logger.bind(method=method, value=measure.value, std_error=measure.abs_error_estimate).debug(
        "Sphere measure estimated"
    )
    return SphereMeasure(
        value=measure.value,
        log_value=math.log(measure.value),
        method=method,  # type: ignore[arg-type]
        std_error=measure.abs_error_estimate,
    )


class SphereComparison(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    q: float
    norm: str
    analytic: SphereMeasure
    ball_volume_mc: SphereMeasure
    gauss_weight_mc: SphereMeasure
    agreement: bool


def _agrees(estimate: SphereMeasure, reference: SphereMeasure) -> bool:
    gap = abs(estimate.value - reference.value)
    return gap <= 1e-2 * reference.value and gap <= 3.0 * estimate.std_error


def compare_sphere_measures(
    qn: QuasiNorm,
    samples: int | None = None,
    seed: int | None = None,
    workers: int | None = None,
    label: str = "",
) -> SphereComparison:
    """Closed form against both Monte-Carlo routes; they agree when each estimate
    lies within 3 standard errors and 1% of the closed form.
    """
    analytic = sphere_measure(qn, "analytic")
    ball = sphere_measure(qn, "ball_volume_mc", samples, seed, workers)
    gauss = sphere_measure(qn, "gauss_weight_mc", samples, seed, workers)
    agreement = _agrees(ball, analytic) and _agrees(gauss, analytic)
    if not agreement:
        logger.bind(
            norm=qn.describe(),
            analytic=analytic.value,
            ball=ball.value,
            gauss=gauss.value,
        ).warning("Sphere-measure routes disagree")
    return SphereComparison(
        label=label,
        q=qn.structure.q,
        norm=qn.describe(),
        analytic=analytic,
        ball_volume_mc=ball,
        gauss_weight_mc=gauss,
        agreement=agreement,
    )
