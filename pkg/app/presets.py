from collections.abc import Mapping
from typing import Any

import orjson
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.dilation import DilationStructure, NormVariant, QuasiNorm, make_norm
from app.errors import ConfigurationError


class NormSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    variant: NormVariant
    p: float | None = None
    layers: tuple[tuple[int, ...], tuple[int, ...]] | None = None


class PresetSpec(BaseModel):
    """JSON form:
    {"weights": [...], "norm": {"variant": ..., "p": ..., "layers": [[...], [...]]}}.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    weights: tuple[float, ...] = Field(min_length=1)
    norm: NormSpec

    def build(self) -> QuasiNorm:
        try:
            structure = DilationStructure(weights=self.weights)
        except ValidationError as e:
            raise ConfigurationError(str(e)) from e
        return make_norm(structure, self.norm.variant, p=self.norm.p, layers=self.norm.layers)


class Preset(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    norm: QuasiNorm


def load_preset(data: str | bytes | Mapping[str, Any]) -> QuasiNorm:
    try:
        raw = orjson.loads(data) if isinstance(data, (str, bytes)) else dict(data)
        spec = PresetSpec.model_validate(raw)
    except (orjson.JSONDecodeError, ValidationError) as e:
        raise ConfigurationError(f"Invalid preset object: {e}") from e
    return spec.build()


def parse_norm_spec(text: str) -> NormSpec:
    """`p:<val>` | `max` | `koranyi`."""
    text = text.strip().lower()
    if text == "max":
        return NormSpec(variant="max")
    if text == "koranyi":
        return NormSpec(variant="koranyi")
    if text.startswith("p:"):
        try:
            return NormSpec(variant="weighted_p", p=float(text[2:]))
        except ValueError as e:
            raise ConfigurationError(f"Invalid norm exponent in {text!r}") from e
    raise ConfigurationError(f"Unknown norm {text!r}, expected p:<val>, max or koranyi")


def parse_weights(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(w) for w in text.replace(" ", ",").split(",") if w)
    except ValueError as e:
        raise ConfigurationError(f"Invalid weight list {text!r}") from e


def _preset_spec(name: str) -> PresetSpec:
    kind, _, argument = name.partition(":")
    match kind:
        case "abelian":
            try:
                n = int(argument)
            except ValueError as e:
                raise ConfigurationError(f"abelian preset needs a dimension: {name!r}") from e
            if n < 1:
                raise ConfigurationError(f"abelian dimension must be positive: {name!r}")
            return PresetSpec(weights=(1.0,) * n, norm=NormSpec(variant="weighted_p", p=2.0))
        case "heisenberg":
            return PresetSpec(weights=(1.0, 1.0, 2.0), norm=NormSpec(variant="koranyi"))
        case "anisotropic":
            weights = parse_weights(argument)
            if not weights:
                raise ConfigurationError(f"anisotropic preset needs weights: {name!r}")
            return PresetSpec(weights=weights, norm=NormSpec(variant="weighted_p"))
    raise ConfigurationError(
        f"Unknown preset {name!r}, expected abelian:N, heisenberg or anisotropic:w1,w2,..."
    )


def resolve_preset(text: str, norm_override: str | None = None) -> Preset:
    """`<preset>[@<norm>]`, with `norm_override` taking precedence over the suffix."""
    name, _, suffix = text.strip().partition("@")
    spec = _preset_spec(name)
    norm_text = norm_override or suffix or None
    if norm_text is not None:
        spec = spec.model_copy(update={"norm": parse_norm_spec(norm_text)})
    norm = spec.build()
    label = name if norm_text is None else f"{name}@{norm_text}"
    return Preset(label=label, norm=norm)


def _weights_label(weights: tuple[float, ...]) -> str:
    return "weights:" + ",".join(f"{w:g}" for w in weights)


def inline_preset(weights: tuple[float, ...], norm_text: str | None) -> Preset:
    norm_spec = parse_norm_spec(norm_text) if norm_text else NormSpec(variant="weighted_p")
    spec = PresetSpec(weights=weights, norm=norm_spec)
    label = _weights_label(weights)
    if norm_text:
        label += f"@{norm_text}"
    return Preset(label=label, norm=spec.build())


def object_preset(data: Mapping[str, Any]) -> Preset:
    """A preset object from a config file; an optional "label" key names it."""
    raw = dict(data)
    label = raw.pop("label", None)
    norm = load_preset(raw)
    if label is None:
        label = f"{_weights_label(norm.structure.weights)}@{norm.variant}"
    return Preset(label=str(label), norm=norm)
