"""Sharp constants A, C, B of the Shannon and Kubo-Ogawa-Suguro inequalities.

All constants are carried as natural logarithms and exponentiated only for
presentation.
"""

import math
from collections.abc import Iterable, Mapping, Sequence

import structlog
from pydantic import BaseModel, ConfigDict

from app.dilation import DilationStructure, QuasiNorm, make_norm
from app.errors import ConfigurationError, DomainError
from app.integrate import SphereMeasure, sphere_measure
from app.specfun import log_gamma

logger = structlog.get_logger(__name__)

OVERRIDABLE = ("A", "C", "B")


def safe_exp(x: float | None) -> float | None:
    if x is None:
        return None
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


class SharpConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    q: float
    alpha: float
    sphere: SphereMeasure
    log_a: float
    log_c: float | None = None
    log_b: float | None = None

    @property
    def log_shannon_scale(self) -> float:
        """ln(alpha e A / Q), the factor in front of the normalized moment."""
        return math.log(self.alpha) + 1.0 + self.log_a - math.log(self.q)

    @property
    def log_ratio(self) -> float | None:
        if self.log_b is None:
            return None
        return self.log_b - self.log_shannon_scale

    @property
    def a(self) -> float:
        return math.exp(self.log_a)

    @property
    def c(self) -> float | None:
        return safe_exp(self.log_c)

    @property
    def b(self) -> float | None:
        return safe_exp(self.log_b)


def _check_alpha(alpha: float, lower: float) -> None:
    if not alpha > lower or not math.isfinite(alpha):
        raise DomainError(f"alpha must be a finite real > {lower:g}, got {alpha}")


def _resolve_sphere(qn: QuasiNorm, sphere: SphereMeasure | None) -> SphereMeasure:
    return sphere_measure(qn, "analytic") if sphere is None else sphere


def log_shannon_a(log_sphere: float, q: float, alpha: float) -> float:
    """ln A with A^(Q/alpha) = |S| Gamma(Q/alpha) / alpha."""
    return (alpha / q) * (log_sphere + log_gamma(q / alpha) - math.log(alpha))


def log_kos_c(log_sphere: float, q: float, alpha: float) -> float:
    """ln C with C^Q = |S| Gamma(Q/alpha) Gamma(Q/alpha') / (alpha Gamma(Q))."""
    alpha_conj = alpha / (alpha - 1.0)
    return (
        log_sphere
        + log_gamma(q / alpha)
        + log_gamma(q / alpha_conj)
        - math.log(alpha)
        - log_gamma(q)
    ) / q


def log_b_from_c(log_c: float, alpha: float) -> float:
    return alpha * math.log(alpha) + (1.0 - alpha) * math.log(alpha - 1.0) + alpha * log_c


def shannon_constant(
    qn: QuasiNorm, alpha: float, sphere: SphereMeasure | None = None
) -> SharpConstants:
    _check_alpha(alpha, 0.0)
    sphere = _resolve_sphere(qn, sphere)
    q = qn.structure.q
    return SharpConstants(
        q=q,
        alpha=alpha,
        sphere=sphere,
        log_a=log_shannon_a(sphere.log_value, q, alpha),
    )


def kos_constant(
    qn: QuasiNorm, alpha: float, sphere: SphereMeasure | None = None
) -> SharpConstants:
    _check_alpha(alpha, 1.0)
    sphere = _resolve_sphere(qn, sphere)
    q = qn.structure.q
    log_c = log_kos_c(sphere.log_value, q, alpha)
    return SharpConstants(
        q=q,
        alpha=alpha,
        sphere=sphere,
        log_a=log_shannon_a(sphere.log_value, q, alpha),
        log_c=log_c,
        log_b=log_b_from_c(log_c, alpha),
    )


def sharp_constants(
    qn: QuasiNorm, alpha: float, sphere: SphereMeasure | None = None
) -> SharpConstants:
    """A for every alpha > 0, plus C and B when alpha > 1."""
    if alpha > 1:
        return kos_constant(qn, alpha, sphere)
    return shannon_constant(qn, alpha, sphere)


def with_overrides(
    consts: SharpConstants, overrides: Mapping[str, float]
) -> SharpConstants:
    """Replace constants by the given linear values (negative-path testing only)."""
    update: dict[str, float] = {}
    for key, value in overrides.items():
        if key not in OVERRIDABLE:
            raise ConfigurationError(
                f"Unknown constant override {key!r}, expected one of {OVERRIDABLE}"
            )
        if not value > 0:
            raise ConfigurationError(f"Constant override {key}={value} must be positive")
        update[f"log_{key.lower()}"] = math.log(value)
    if update:
        logger.bind(overrides=dict(overrides), alpha=consts.alpha, q=consts.q).warning(
            "Sharp constants overridden"
        )
    return consts.model_copy(update=update)


class ComparisonRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    q: float
    alpha: float
    sphere: float
    a: float
    c: float | None
    b: float | None
    shannon_scale: float
    ratio: float | None


def comparison_row(label: str, consts: SharpConstants) -> ComparisonRow:
    return ComparisonRow(
        label=label,
        q=consts.q,
        alpha=consts.alpha,
        sphere=consts.sphere.value,
        a=consts.a,
        c=consts.c,
        b=consts.b,
        shannon_scale=math.exp(consts.log_shannon_scale),
        ratio=safe_exp(consts.log_ratio),
    )


def constant_comparison_table(
    norms: Sequence[tuple[str, QuasiNorm]], alphas: Iterable[float]
) -> list[ComparisonRow]:
    """Rows (Q, alpha, |S|, A, C, B, alpha e A/Q, B/(alpha e A/Q)) for each labelled
    norm and alpha; only C, B and the ratio are left empty for alpha <= 1.
    """
    alphas = list(alphas)
    rows = []
    for label, qn in norms:
        sphere = sphere_measure(qn, "analytic")
        for alpha in alphas:
            rows.append(comparison_row(label, sharp_constants(qn, alpha, sphere)))
    return rows


def abelian_ladder(dims: Iterable[int]) -> list[tuple[str, QuasiNorm]]:
    """Euclidean R^N for each N, the setting in which B is compared with A."""
    return [
        (f"abelian:{n}", make_norm(DilationStructure(weights=(1.0,) * n), "weighted_p", p=2.0))
        for n in dims
    ]
