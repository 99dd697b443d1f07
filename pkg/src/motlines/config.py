"""Flat key/value run configuration.

A config file is INI text. Section headers are optional and only group
keys visually; every key name is global and must be unique. Values are
checked by building the parameter objects of each module, so a bad value
fails at load time with the module's own message.

    # detection
    tracker = kalman
    l_mm = 128
    gap_absolute = 10
    kalman_r = 1, 1, 4
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .engine import EngineParams
from .evaluation import VectorMatchParams
from .extraction import ExtractionParams
from .trackers import TrackerKind, TrackerParams


class ConfigError(ValueError):
    """Unknown key, unparsable value or value outside its valid range."""


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _optional_float(text: str) -> float | None:
    t = text.strip().lower()
    return None if t in ("", "none", "off") else float(t)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _tracker(text: str) -> TrackerKind:
    return TrackerKind.parse(text.strip())


# key -> parser of its text value
_EXTRACTION = {"l_mm": _int, "r": float, "max_thickness": _int}
_TRACKER = {
    "sma_cap": _int, "ema_horizon": _int, "double_exp_alpha": float,
    "one_euro_min_cutoff": float, "one_euro_beta": float, "one_euro_d_cutoff": float,
    "kalman_q": float, "kalman_p0": float, "kalman_r": _floats,
    "stats_window": _int, "sigma_floor_slope": float,
    "sigma_floor_thickness": float, "sigma_floor_luminance": float,
}
_ENGINE = {
    "tracker": _tracker, "match_distance": float, "gap_relative": float,
    "gap_absolute": _int, "min_length": _int, "occlusion_spans": _bool,
    "overlap_threshold": float, "filter_min_length": _optional_float,
    "thickness_min": _optional_float, "thickness_max": _optional_float,
    "angle_min": _optional_float, "angle_max": _optional_float,
}
_EVALUATION = {"min_overlap": float, "max_perp_distance": float, "max_angle_diff": float}
_PREPROCESS = {"top_hat_radius": _int}

PARSERS: dict[str, Callable[[str], object]] = {
    **_EXTRACTION, **_TRACKER, **_ENGINE, **_EVALUATION, **_PREPROCESS,
}


def _defaults() -> dict[str, object]:
    ex, tr, en, ev = ExtractionParams(), TrackerParams(), EngineParams(), VectorMatchParams()
    d: dict[str, object] = {k: getattr(ex, k) for k in _EXTRACTION}
    d.update({k: getattr(tr, k) for k in _TRACKER})
    d.update({
        "tracker": en.tracker_kind,
        "match_distance": en.match_distance,
        "gap_relative": en.gap_relative,
        "gap_absolute": en.gap_absolute,
        "min_length": en.min_length,
        "occlusion_spans": en.occlusion_spans,
        "overlap_threshold": en.overlap_threshold,
        "filter_min_length": None,
        "thickness_min": None,
        "thickness_max": None,
        "angle_min": None,
        "angle_max": None,
    })
    d.update({
        "min_overlap": ev.min_overlap,
        "max_perp_distance": ev.max_perp_distance,
        "max_angle_diff": ev.max_angle_diff,
    })
    d["top_hat_radius"] = 0
    return d


def _range(lo, hi, name):
    if lo is None and hi is None:
        return None
    if lo is None or hi is None:
        raise ConfigError(f"{name}_min and {name}_max must be given together")
    return (lo, hi)


@dataclass(frozen=True)
class Config:
    engine: EngineParams = field(default_factory=EngineParams)
    vector_match: VectorMatchParams = field(default_factory=VectorMatchParams)
    top_hat_radius: int = 0
    values: Mapping[str, object] = field(default_factory=dict)

    @classmethod
    def from_values(cls, values: Mapping[str, object]) -> "Config":
        v = {**_defaults(), **values}
        unknown = sorted(set(v) - set(PARSERS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        try:
            extraction = ExtractionParams(**{k: v[k] for k in _EXTRACTION})
            tracker = TrackerParams(**{k: v[k] for k in _TRACKER})
            engine = EngineParams(
                extraction=extraction,
                tracker_kind=v["tracker"],
                tracker=tracker,
                match_distance=v["match_distance"],
                gap_relative=v["gap_relative"],
                gap_absolute=v["gap_absolute"],
                min_length=v["min_length"],
                occlusion_spans=v["occlusion_spans"],
                overlap_threshold=v["overlap_threshold"],
                filter_min_length=v["filter_min_length"],
                thickness_range=_range(v["thickness_min"], v["thickness_max"], "thickness"),
                angle_range=_range(v["angle_min"], v["angle_max"], "angle"),
            )
            vector_match = VectorMatchParams(**{k: v[k] for k in _EVALUATION})
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if v["top_hat_radius"] < 0:
            raise ConfigError("top_hat_radius must be >= 0 (0 disables the top-hat)")
        return cls(engine, vector_match, int(v["top_hat_radius"]), dict(v))

    def as_dict(self) -> dict:
        """JSON-ready flat view of every key."""
        out = {}
        for k, val in self.values.items():
            if isinstance(val, TrackerKind):
                val = val.value
            elif isinstance(val, tuple):
                val = list(val)
            out[k] = val
        return dict(sorted(out.items()))


def parse_values(items: Iterable[tuple[str, str]], origin: str) -> dict[str, object]:
    out = {}
    for key, text in items:
        key = key.strip().lower().replace("-", "_")
        if key not in PARSERS:
            raise ConfigError(f"{origin}: unknown config key {key!r}")
        try:
            out[key] = PARSERS[key](text)
        except ValueError as exc:
            raise ConfigError(f"{origin}: bad value for {key}: {exc}") from exc
    return out


def read_config_file(path: str | Path) -> dict[str, object]:
    """Parse a config file into typed values (keys are not yet cross-checked)."""
    path = Path(path)
    text = path.read_text()
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[__top__]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    items, seen = [], set()
    for section in parser.sections():
        for key, value in parser.items(section):
            if key in seen:
                raise ConfigError(f"{path}: key {key!r} given twice")
            seen.add(key)
            items.append((key, value))
    return parse_values(items, str(path))


def parse_overrides(pairs: Iterable[str]) -> dict[str, object]:
    items = []
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, value = pair.split("=", 1)
        items.append((key, value))
    return parse_values(items, "--set")


def load_config(path: str | Path | None = None, overrides: Mapping[str, object] | None = None) -> Config:
    values: dict[str, object] = {}
    if path is not None:
        values.update(read_config_file(path))
    if overrides:
        values.update(overrides)
    return Config.from_values(values)

