"""Shipped test functions, addressable by string ids such as `gaussian:c=1`.

Ids take the form `name[:key=value,key=value]`. Functions that depend on the
exponent (`extremizer`, `kos-profile`, `perturbed`) are built for the alpha of
the record being verified unless an explicit `alpha=` parameter is given.
"""

import math
from collections.abc import Callable

import numpy as np
import numpy.typing as npt

from app.dilation import QuasiNorm
from app.errors import ConfigurationError, DomainError
from app.functionals import TestFunction
from app.sharp_constants import kos_constant, shannon_constant

Builder = Callable[[QuasiNorm, float, dict[str, float]], TestFunction]


def parse_function_id(function_id: str) -> tuple[str, dict[str, float]]:
    name, _, argument = function_id.strip().partition(":")
    params: dict[str, float] = {}
    for item in filter(None, argument.split(",")):
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigurationError(f"Malformed parameter {item!r} in {function_id!r}")
        try:
            params[key.strip()] = float(raw)
        except ValueError as e:
            raise ConfigurationError(f"Non-numeric parameter {item!r} in {function_id!r}") from e
    return name, params


def _take(
    params: dict[str, float], allowed: dict[str, float], function_id: str
) -> dict[str, float]:
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigurationError(f"Unknown parameters {sorted(unknown)} for {function_id!r}")
    return {**allowed, **params}


def _positive(value: float, name: str) -> float:
    if not value > 0:
        raise ConfigurationError(f"Parameter {name} must be positive, got {value}")
    return value


def extremizer_profile(
    a_const: float, alpha: float
) -> Callable[[npt.ArrayLike], npt.NDArray[np.float64]]:
    return lambda r: np.exp(-a_const * np.power(r, alpha))


def bump_profile(radius: float) -> Callable[[npt.ArrayLike], npt.NDArray[np.float64]]:
    return lambda r: np.clip(1.0 - np.square(np.asarray(r) / radius), 0.0, None) ** 2


def _extremizer(qn: QuasiNorm, alpha: float, params: dict[str, float]) -> TestFunction:
    params = _take(params, {"alpha": alpha}, "extremizer")
    alpha = _positive(params["alpha"], "alpha")
    a_const = shannon_constant(qn, alpha).a
    q = qn.structure.q
    return TestFunction(
        function_id="extremizer",
        norm=qn,
        profile=extremizer_profile(a_const, alpha),
        scale=(q / (alpha * a_const)) ** (1.0 / alpha),
    )


def _kos_profile(qn: QuasiNorm, alpha: float, params: dict[str, float]) -> TestFunction:
    params = _take(params, {"alpha": alpha}, "kos-profile")
    alpha = params["alpha"]
    if not alpha > 1:
        raise DomainError(f"kos-profile needs alpha > 1, got {alpha:g}")
    q = qn.structure.q
    log_c = kos_constant(qn, alpha).log_c
    assert log_c is not None
    normalizer = math.exp(-q * log_c)
    return TestFunction(
        function_id="kos-profile",
        norm=qn,
        profile=lambda r: normalizer * (1.0 + np.power(r, alpha)) ** -q,
        decay=alpha * q,
    )


def _cauchy(qn: QuasiNorm, alpha: float, params: dict[str, float]) -> TestFunction:
    _take(params, {}, "cauchy")
    if qn.structure.q != 1.0:
        raise ConfigurationError("cauchy is defined on one-dimensional structures only")
    return TestFunction(
        function_id="cauchy",
        norm=qn,
        profile=lambda r: 1.0 / (math.pi * (1.0 + np.square(r))),
        decay=2.0,
    )


def _gaussian(qn: QuasiNorm, alpha: float, params: dict[str, float]) -> TestFunction:
    c = _positive(_take(params, {"c": 1.0}, "gaussian")["c"], "c")
    q = qn.structure.q
    return TestFunction(
        function_id=f"gaussian:c={c:g}",
        norm=qn,
        profile=lambda r: np.exp(-c * np.square(r)),
        scale=math.sqrt(q / (2.0 * c)),
    )


def _stretched(qn: QuasiNorm, alpha: float, params: dict[str, float]) -> TestFunction:
    params = _take(params, {"c": 1.0, "beta": 1.0}, "stretched")
    c, beta = _positive(params["c"], "c"), _positive(params["beta"], "beta")
    q = qn.structure.q
    return TestFunction(
        function_id=f"stretched:c={c:g},beta={beta:g}",
        norm=qn,
        profile=lambda r: np.exp(-c * np.power(r, beta)),
        scale=(q / (beta * c)) ** (1.0 / beta),
    )


def _bump(qn: QuasiNorm, alpha: float, params: dict[str, float]) -> TestFunction:
    radius = _positive(_take(params, {"radius": 1.0}, "bump")["radius"], "radius")
    return TestFunction(
        function_id="bump" if radius == 1.0 else f"bump:radius={radius:g}",
        norm=qn,
        profile=bump_profile(radius),
        scale=radius,
    )


def _mixture(qn: QuasiNorm, alpha: float, params: dict[str, float]) -> TestFunction:
    _take(params, {}, "mixture")
    return TestFunction(
        function_id="mixture",
        norm=qn,
        profile=lambda r: (
            np.exp(-np.square(r)) + 0.5 * np.exp(-4.0 * np.square(np.asarray(r) - 1.5))
        ),
        scale=2.5,
    )


def _perturbed(qn: QuasiNorm, alpha: float, params: dict[str, float]) -> TestFunction:
    """E_alpha (1 + eps * bump), a near-extremal family approaching equality as eps -> 0."""
    params = _take(params, {"eps": 0.1, "alpha": alpha}, "perturbed")
    eps, alpha = _positive(params["eps"], "eps"), _positive(params["alpha"], "alpha")
    extremizer = _extremizer(qn, alpha, {"alpha": alpha})
    assert extremizer.profile is not None
    base, bump = extremizer.profile, bump_profile(extremizer.scale)
    return TestFunction(
        function_id=f"perturbed:eps={eps:g}",
        norm=qn,
        profile=lambda r: base(r) * (1.0 + eps * bump(r)),
        scale=extremizer.scale,
    )


BUILDERS: dict[str, Builder] = {
    "extremizer": _extremizer,
    "kos-profile": _kos_profile,
    "cauchy": _cauchy,
    "gaussian": _gaussian,
    "stretched": _stretched,
    "bump": _bump,
    "mixture": _mixture,
    "perturbed": _perturbed,
}


def check_function_id(function_id: str) -> None:
    name, _ = parse_function_id(function_id)
    if name not in BUILDERS:
        raise ConfigurationError(
            f"Unknown test function {function_id!r}, expected one of {sorted(BUILDERS)}"
        )


def build_function(function_id: str, qn: QuasiNorm, alpha: float) -> TestFunction:
    check_function_id(function_id)
    name, params = parse_function_id(function_id)
    return BUILDERS[name](qn, alpha, params)
