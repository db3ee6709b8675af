"""Entropy functional, weighted moments and L1 norms of test functions, and the
dilation action u -> u_lambda.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
import numpy.typing as npt
import structlog
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import xlogy

from app.dilation import DilationStructure, Point, QuasiNorm
from app.errors import (
    DegenerateFunctionError,
    DivergentMomentError,
    DomainError,
)
from app.integrate import (
    IntegrationResult,
    PointFunction,
    RadialIntegrand,
    qmc_integrals,
    radial_integral,
    sphere_measure,
)
from app.settings import settings
from app.sharp_constants import SharpConstants

logger = structlog.get_logger(__name__)

Profile = Callable[[npt.ArrayLike], npt.NDArray[np.float64]]

_DEGENERATE_L1 = 1e-300


class Budgets(BaseModel):
    model_config = ConfigDict(frozen=True)

    rel_tol: float = Field(default_factory=lambda: settings.rel_tol, gt=0, le=1e-2)
    max_evaluations: int = Field(default_factory=lambda: settings.max_evaluations, gt=0)
    samples: int = Field(default_factory=lambda: settings.qmc_samples, ge=2**10)
    replicates: int = Field(default_factory=lambda: settings.qmc_replicates, ge=2)
    seed: int = Field(default_factory=lambda: settings.seed)
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)


@dataclass(frozen=True)
class Estimate:
    value: float
    error: float


@dataclass(frozen=True)
class TestFunction:
    """A nonnegative integrable function on R^N.

    Radial functions are u(x) = profile(|x|); general ones evaluate points
    directly (arrays with coordinates on the last axis). `decay` is the
    power-law tail exponent tau of u ~ |x|^-tau, None for faster decay.
    """

    __test__ = False  # not a pytest class

    function_id: str
    norm: QuasiNorm
    profile: Profile | None = None
    evaluator: PointFunction | None = None
    scale: float = 1.0
    decay: float | None = None

    def __post_init__(self) -> None:
        if (self.profile is None) == (self.evaluator is None):
            raise DomainError("A test function needs exactly one of profile or evaluator")

    @property
    def kind(self) -> Literal["radial", "general"]:
        return "radial" if self.profile is not None else "general"

    @property
    def structure(self) -> DilationStructure:
        return self.norm.structure

    def __call__(self, x: npt.ArrayLike) -> npt.NDArray[np.float64]:
        if self.profile is not None:
            return np.abs(self.profile(self.norm(x)))
        assert self.evaluator is not None
        return np.abs(self.evaluator(self.structure.check_point(x)))

    def as_general(self) -> "TestFunction":
        if self.profile is None:
            return self
        profile, norm = self.profile, self.norm
        return replace(
            self,
            function_id=f"{self.function_id}|general",
            profile=None,
            evaluator=lambda x: profile(norm(x)),
        )

    def scaled(self, c: float) -> "TestFunction":
        if not c > 0:
            raise DomainError(f"Scalar multiple must be positive, got {c}")
        new_id = f"{self.function_id}|scale:{c:g}"
        if self.profile is not None:
            profile = self.profile
            return replace(self, function_id=new_id, profile=lambda r: c * profile(r))
        evaluator = self.evaluator
        assert evaluator is not None
        return replace(self, function_id=new_id, evaluator=lambda x: c * evaluator(x))

    def moment_diverges(self, order: float) -> bool:
        return self.decay is not None and self.decay <= self.structure.q + order


class FunctionalErrors(BaseModel):
    model_config = ConfigDict(frozen=True)

    l1: float = Field(ge=0)
    entropy: float = Field(ge=0)
    moment_alpha: float = Field(ge=0)
    bracket_moment: float = Field(ge=0)


class FunctionalValues(BaseModel):
    """Infinite moments are reported as +inf (functions outside L^{1,alpha})."""

    model_config = ConfigDict(frozen=True)

    q: float
    alpha: float
    l1: float = Field(gt=0)
    entropy: float
    moment_alpha: float = Field(ge=0)
    bracket_moment: float = Field(ge=0)
    error_estimates: FunctionalErrors


def _guarded(g: Profile, weight: Callable[[float], float]) -> Callable[[float], float]:
    def integrand(r: float) -> float:
        value = float(g(r))
        if value == 0:
            return 0.0
        return value * weight(r)

    return integrand


def _log1p_power(r: npt.ArrayLike, alpha: float) -> npt.NDArray[np.float64]:
    """ln(1 + r^alpha) without overflow."""
    with np.errstate(divide="ignore"):
        return np.logaddexp(0.0, alpha * np.log(r))


def _bracket_power(r: npt.ArrayLike, alpha: float) -> npt.NDArray[np.float64]:
    """<r>^alpha = (1 + r^2)^(alpha/2) without overflow in r^2."""
    return np.exp(0.5 * alpha * _log1p_power(r, 2.0))


class _RadialRoute:
    def __init__(self, u: TestFunction, budgets: Budgets) -> None:
        assert u.profile is not None
        raw = u.profile
        self.u = u
        self.profile: Profile = lambda r: np.abs(raw(r))
        self.budgets = budgets
        self.sphere = sphere_measure(u.norm, "analytic").value

    def integrate(self, g: Callable[[float], float]) -> IntegrationResult:
        integrand = RadialIntegrand(g, self.u.structure.q, self.u.scale)
        result = radial_integral(integrand, self.budgets.rel_tol, self.budgets.max_evaluations)
        return result.scaled(self.sphere)

    def weighted(self, weight: Callable[[float], float]) -> IntegrationResult:
        return self.integrate(_guarded(self.profile, weight))


def _radial_functionals(u: TestFunction, alpha: float, budgets: Budgets) -> FunctionalValues:
    route = _RadialRoute(u, budgets)
    profile = route.profile
    l1 = route.integrate(lambda r: float(profile(r)))
    if l1.value < _DEGENERATE_L1:
        raise DegenerateFunctionError(f"{u.function_id} has vanishing L1 norm {l1.value}")
    mass = l1.value

    def information(r: float) -> float:
        w = profile(r) / mass
        return float(-xlogy(w, w))

    entropy = route.integrate(information)
    entropy_error = entropy.abs_error_estimate + l1.abs_error_estimate / mass
    if u.moment_diverges(alpha):
        moment = bracket = IntegrationResult(math.inf, 0.0, 0)
    else:
        moment = route.weighted(lambda r: float(np.power(r, alpha)))
        bracket = route.weighted(lambda r: float(_bracket_power(r, alpha)))
    return FunctionalValues(
        q=u.structure.q,
        alpha=alpha,
        l1=mass,
        entropy=entropy.value,
        moment_alpha=moment.value,
        bracket_moment=bracket.value,
        error_estimates=FunctionalErrors(
            l1=l1.abs_error_estimate,
            entropy=entropy_error,
            moment_alpha=moment.abs_error_estimate,
            bracket_moment=bracket.abs_error_estimate,
        ),
    )


def _general_functionals(u: TestFunction, alpha: float, budgets: Budgets) -> FunctionalValues:
    norm = u.norm
    diverges = u.moment_diverges(alpha)

    def mass(x: Point) -> npt.NDArray[np.float64]:
        return u(x)

    def u_log_u(x: Point) -> npt.NDArray[np.float64]:
        values = u(x)
        return np.asarray(xlogy(values, values))

    def moment(x: Point) -> npt.NDArray[np.float64]:
        return u(x) * norm(x) ** alpha

    def bracket(x: Point) -> npt.NDArray[np.float64]:
        return u(x) * _bracket_power(norm(x), alpha)

    integrands: list[PointFunction] = [mass, u_log_u]
    if not diverges:
        integrands += [moment, bracket]
    results = qmc_integrals(
        u.structure,
        integrands,
        samples=budgets.samples,
        seed=budgets.seed,
        scale=u.scale,
        replicates=budgets.replicates,
        workers=budgets.workers,
    )
    l1, ulogu = results[0], results[1]
    if l1.value < _DEGENERATE_L1:
        raise DegenerateFunctionError(f"{u.function_id} has vanishing L1 norm {l1.value}")
    if diverges:
        moment_result = bracket_result = IntegrationResult(math.inf, 0.0, 0)
    else:
        moment_result, bracket_result = results[2], results[3]
    entropy = math.log(l1.value) - ulogu.value / l1.value
    entropy_error = ulogu.abs_error_estimate / l1.value + (
        l1.abs_error_estimate / l1.value
    ) * (1.0 + abs(ulogu.value) / l1.value)
    return FunctionalValues(
        q=u.structure.q,
        alpha=alpha,
        l1=l1.value,
        entropy=entropy,
        moment_alpha=moment_result.value,
        bracket_moment=bracket_result.value,
        error_estimates=FunctionalErrors(
            l1=l1.abs_error_estimate,
            entropy=entropy_error,
            moment_alpha=moment_result.abs_error_estimate,
            bracket_moment=bracket_result.abs_error_estimate,
        ),
    )


def evaluate_functionals(
    u: TestFunction, alpha: float, budgets: Budgets | None = None
) -> FunctionalValues:
    """L1 norm, normalized entropy, alpha-moment and <x>^alpha-moment of u.

    Entropy follows the convention u log u = 0 where u = 0.
    """
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    budgets = budgets or Budgets()
    if u.kind == "radial":
        values = _radial_functionals(u, alpha, budgets)
    else:
        values = _general_functionals(u, alpha, budgets)
    logger.bind(
        function_id=u.function_id,
        kind=u.kind,
        alpha=alpha,
        l1=values.l1,
        entropy=values.entropy,
        moment=values.moment_alpha,
    ).debug("Functionals evaluated")
    return values


def dilate_function(u: TestFunction, lam: float) -> TestFunction:
    """u_lambda(x) = lambda^Q u(D_lambda x); preserves the L1 norm."""
    if not lam > 0:
        raise DomainError(f"Dilation parameter must be positive, got {lam}")
    if lam == 1:
        return u
    factor = lam**u.structure.q
    new_id = f"{u.function_id}|dilate:{lam:g}"
    if u.profile is not None:
        profile = u.profile
        return replace(
            u,
            function_id=new_id,
            profile=lambda r: factor * profile(lam * np.asarray(r)),
            scale=u.scale / lam,
        )
    evaluator = u.evaluator
    assert evaluator is not None
    stretch = lam**u.structure.weight_array
    return replace(
        u,
        function_id=new_id,
        evaluator=lambda x: factor * evaluator(x * stretch),
        scale=u.scale / lam,
    )


def _check_pairing(values: FunctionalValues, consts: SharpConstants) -> None:
    if values.alpha != consts.alpha or values.q != consts.q:
        raise DomainError(
            f"Functionals (Q={values.q}, alpha={values.alpha}) do not match constants "
            f"(Q={consts.q}, alpha={consts.alpha})"
        )


def _log_normalized_moment(values: FunctionalValues) -> float:
    if math.isinf(values.moment_alpha):
        raise DivergentMomentError(
            f"|x|^{values.alpha:g} u is not integrable; Shannon right side is infinite"
        )
    if not values.moment_alpha > 0:
        raise DomainError("Shannon right side needs a positive alpha-moment")
    return math.log(values.moment_alpha / values.l1)


def shannon_rhs(values: FunctionalValues, consts: SharpConstants) -> float:
    """(Q/alpha) ln((alpha e A / Q) * moment_alpha / l1)."""
    _check_pairing(values, consts)
    return (consts.q / consts.alpha) * (
        consts.log_shannon_scale + _log_normalized_moment(values)
    )


def shannon_via_b_rhs(values: FunctionalValues, consts: SharpConstants) -> float:
    """(Q/alpha) ln(B * moment_alpha / l1), the bound obtained through KOS."""
    _check_pairing(values, consts)
    if consts.log_b is None:
        raise DomainError(f"B is undefined for alpha={consts.alpha:g} <= 1")
    return (consts.q / consts.alpha) * (consts.log_b + _log_normalized_moment(values))


def shannon_rhs_error(values: FunctionalValues) -> float:
    """Propagated absolute error of either Shannon-type right side."""
    errors = values.error_estimates
    relative = errors.moment_alpha / values.moment_alpha + errors.l1 / values.l1
    return (values.q / values.alpha) * relative


def entropy_dilation_shift(q: float, lam: float) -> float:
    """entropy(u_lambda) - entropy(u) = -Q ln lambda."""
    return -q * math.log(lam)


def kos_rhs_estimate(
    u: TestFunction,
    alpha: float,
    consts: SharpConstants,
    budgets: Budgets | None = None,
    l1: Estimate | None = None,
) -> Estimate:
    """Q * integral (u/l1) ln(C (1 + |x|^alpha)) dx, in the normalized form."""
    if not alpha > 1:
        raise DomainError(f"KOS inequality requires alpha > 1, got {alpha}")
    if consts.log_c is None or consts.alpha != alpha:
        raise DomainError(f"Constants for alpha={consts.alpha:g} carry no C for alpha={alpha:g}")
    budgets = budgets or Budgets()
    q = u.structure.q
    if u.profile is not None:
        route = _RadialRoute(u, budgets)
        if l1 is None:
            mass = route.integrate(lambda r: float(route.profile(r)))
            l1 = Estimate(mass.value, mass.abs_error_estimate)
        log_weight = route.weighted(lambda r: float(_log1p_power(r, alpha)))
    else:
        norm = u.norm

        def mass_fn(x: Point) -> npt.NDArray[np.float64]:
            return u(x)

        def log_fn(x: Point) -> npt.NDArray[np.float64]:
            return u(x) * _log1p_power(norm(x), alpha)

        mass_result, log_weight = qmc_integrals(
            u.structure,
            [mass_fn, log_fn],
            samples=budgets.samples,
            seed=budgets.seed,
            scale=u.scale,
            replicates=budgets.replicates,
            workers=budgets.workers,
        )
        if l1 is None:
            l1 = Estimate(mass_result.value, mass_result.abs_error_estimate)
    if l1.value < _DEGENERATE_L1:
        raise DegenerateFunctionError(f"{u.function_id} has vanishing L1 norm {l1.value}")
    mean_log = log_weight.value / l1.value
    value = q * (consts.log_c + mean_log)
    error = q * (
        log_weight.abs_error_estimate / l1.value + abs(mean_log) * l1.error / l1.value
    )
    return Estimate(value, error)


def kos_rhs(
    u: TestFunction,
    alpha: float,
    consts: SharpConstants,
    budgets: Budgets | None = None,
) -> float:
    return kos_rhs_estimate(u, alpha, consts, budgets).value
