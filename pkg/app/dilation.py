"""Anisotropic dilation structures and homogeneous quasi-norms on R^N."""

from typing import Annotated, Any, Literal

import numpy as np
import numpy.typing as npt
import structlog
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    computed_field,
    model_validator,
)

from app.errors import ConfigurationError, DimensionMismatchError, DomainError

logger = structlog.get_logger(__name__)

Point = npt.NDArray[np.float64]
NormVariant = Literal["weighted_p", "max", "koranyi"]

_Weight = Annotated[float, Field(gt=0, allow_inf_nan=False)]


class DilationStructure(BaseModel):
    """Dilation weights nu_1..nu_N; Q is always derived from them."""

    model_config = ConfigDict(frozen=True)

    weights: tuple[_Weight, ...] = Field(min_length=1)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def n(self) -> int:
        return len(self.weights)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def q(self) -> float:
        return float(sum(self.weights))

    @property
    def weight_array(self) -> npt.NDArray[np.float64]:
        return np.asarray(self.weights, dtype=np.float64)

    def check_point(self, x: npt.ArrayLike) -> Point:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 0 or arr.shape[-1] != self.n:
            raise DimensionMismatchError(
                f"Point of shape {arr.shape} does not match dimension {self.n}"
            )
        return arr

    def describe(self) -> str:
        return "(" + ",".join(f"{w:g}" for w in self.weights) + ")"


class QuasiNorm(BaseModel):
    """A homogeneous quasi-norm attached to a dilation structure.

    Every variant depends on the coordinates only through |x_i|, so the
    symmetry axiom |x^-1| = |x| is realized as negation symmetry. Evaluation
    is vectorized over leading axes; the last axis holds the coordinates.
    """

    model_config = ConfigDict(frozen=True)

    variant: NormVariant
    structure: DilationStructure
    p: float | None = Field(default=None, gt=0, allow_inf_nan=False)
    layers: tuple[tuple[int, ...], tuple[int, ...]] | None = None

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        structure = data.get("structure")
        if isinstance(structure, dict):
            structure = DilationStructure.model_validate(structure)
        if not isinstance(structure, DilationStructure):
            return data
        if data.get("variant") == "weighted_p" and data.get("p") is None:
            data["p"] = 2.0 * max(structure.weights)
        if data.get("variant") == "koranyi" and data.get("layers") is None:
            data["layers"] = (
                tuple(i for i, w in enumerate(structure.weights) if w == 1.0),
                tuple(i for i, w in enumerate(structure.weights) if w == 2.0),
            )
        return data

    @model_validator(mode="after")
    def _check_layers(self) -> "QuasiNorm":
        if self.variant != "koranyi":
            return self
        assert self.layers is not None
        first, second = self.layers
        if not first or not second:
            raise ValueError("Koranyi norm needs a nonempty first and second layer")
        indices = sorted(first + second)
        if indices != list(range(self.structure.n)):
            raise ValueError("Koranyi layers must partition the coordinate indices")
        weights = self.structure.weights
        if any(weights[i] != 1.0 for i in first) or any(
            weights[j] != 2.0 for j in second
        ):
            raise ValueError(
                f"Koranyi norm requires weights 1 on the first layer and 2 on the "
                f"second, got {self.structure.describe()}"
            )
        return self

    def __call__(self, x: npt.ArrayLike) -> npt.NDArray[np.float64]:
        arr = np.abs(self.structure.check_point(x))
        match self.variant:
            case "weighted_p":
                assert self.p is not None
                exponents = self.p / self.structure.weight_array
                with np.errstate(over="ignore"):
                    total = np.sum(arr**exponents, axis=-1)
                return np.asarray(total ** (1.0 / self.p))
            case "max":
                with np.errstate(over="ignore"):
                    return np.asarray(
                        np.max(arr ** (1.0 / self.structure.weight_array), axis=-1)
                    )
            case "koranyi":
                assert self.layers is not None
                first, second = self.layers
                horizontal = np.sum(arr[..., list(first)] ** 2, axis=-1)
                vertical = np.sum(arr[..., list(second)] ** 2, axis=-1)
                return np.asarray((horizontal**2 + vertical) ** 0.25)

    @property
    def is_euclidean(self) -> bool:
        return (
            self.variant == "weighted_p"
            and self.p == 2.0
            and all(w == 1.0 for w in self.structure.weights)
        )

    def describe(self) -> str:
        match self.variant:
            case "weighted_p":
                return f"weighted_p(p={self.p:g})"
            case "max":
                return "max"
            case "koranyi":
                return f"koranyi(layers={self.layers})"


def make_norm(
    structure: DilationStructure,
    variant: NormVariant,
    p: float | None = None,
    layers: tuple[tuple[int, ...], tuple[int, ...]] | None = None,
) -> QuasiNorm:
    try:
        return QuasiNorm(variant=variant, structure=structure, p=p, layers=layers)
    except ValidationError as e:
        logger.bind(variant=variant, weights=structure.weights).debug(
            "Rejected quasi-norm configuration"
        )
        raise ConfigurationError(str(e)) from e


def _check_lambda(lam: float) -> None:
    if not lam > 0:
        raise DomainError(f"Dilation parameter must be positive, got {lam}")


def dilate(s: DilationStructure, lam: float, x: npt.ArrayLike) -> Point:
    """D_lambda(x) = (lambda^nu_1 x_1, ..., lambda^nu_N x_N)."""
    _check_lambda(lam)
    arr = s.check_point(x)
    return arr * lam**s.weight_array


def quasi_norm(qn: QuasiNorm, x: npt.ArrayLike) -> float:
    return float(qn(x))


def japanese_bracket(qn: QuasiNorm, x: npt.ArrayLike) -> float:
    return float(np.hypot(1.0, qn(x)))


def homogeneity_residual(qn: QuasiNorm, lam: float, x: npt.ArrayLike) -> float:
    dilated = dilate(qn.structure, lam, x)
    return abs(quasi_norm(qn, dilated) - lam * quasi_norm(qn, x))
