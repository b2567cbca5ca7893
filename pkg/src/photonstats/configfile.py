"""Plain-text run configuration: one ``section.key = value`` pair per line.

Example::

    scheme = la_phonon
    emitter.t1_ps = 300.0
    optics.mode = hom
    detector.efficiency = 0.85

Unknown keys raise ConfigError so typos cannot silently fall back to
defaults. ``#`` starts a comment.
"""

from __future__ import annotations

import dataclasses

from .model import (
    ConfigError,
    DetectorConfig,
    EmitterConfig,
    ExperimentConfig,
    OpticsConfig,
)


def _float(v):
    return float(v)


def _int_ps(v):
    f = float(v)
    i = int(round(f))
    if abs(f - i) > 1e-9:
        raise ValueError("expected an integer number of ps")
    return i


def _str(v):
    return str(v).strip().lower()


def _opt_float(v):
    return None if _str(v) in ("none", "off", "") else float(v)


# key -> (config section, dataclass field, parser)
_SCHEMA = {
    "emitter.rep_rate_hz": ("emitter", "rep_rate", _float),
    "emitter.p_exc": ("emitter", "p_exc", _float),
    "emitter.t1_ps": ("emitter", "t1", _float),
    "emitter.epsilon": ("emitter", "epsilon", _float),
    "emitter.blink_strength": ("emitter", "blink_strength", _float),
    "emitter.blink_tau_ps": ("emitter", "blink_tau", _float),
    "emitter.sigma_detuning_rad_per_ps": ("emitter", "sigma_detuning", _float),
    "emitter.refill_tau_ps": ("emitter", "refill_tau", _opt_float),
    "optics.mode": ("optics", "mode", _str),
    "optics.polarization": ("optics", "polarization", _str),
    "optics.demux_period_ps": ("optics", "demux_period", _int_ps),
    "optics.arm_delay_ps": ("optics", "arm_delay", _int_ps),
    "optics.splitter_ratio": ("optics", "splitter_ratio", _float),
    "detector.efficiency": ("detector", "efficiency", _float),
    "detector.jitter_sigma_ps": ("detector", "jitter_sigma", _float),
    "detector.dead_time_ps": ("detector", "dead_time", _float),
    "detector.dark_rate_hz": ("detector", "dark_rate", _float),
    "scheme": (None, "scheme", _str),
}

_SECTIONS = {"emitter": EmitterConfig, "optics": OpticsConfig, "detector": DetectorConfig}


def _parse_items(text, source):
    fields = {"emitter": {}, "optics": {}, "detector": {}}
    scheme = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}")
        seen.add(key)
        section, attr, parse = _SCHEMA[key]
        try:
            parsed = parse(value)
        except ValueError as exc:
            raise ConfigError(
                f"{source}:{lineno}: bad value {value!r} for {key!r}: {exc}"
            ) from None
        if section is None:
            scheme = parsed
        else:
            fields[section][attr] = parsed
    return fields, scheme


def parse_config(text, source="<config>") -> ExperimentConfig:
    """Parse config text into an ExperimentConfig.

    A ``scheme`` key seeds emitter and detector from the named profile;
    explicit keys override the profile values. Unknown keys, duplicate keys
    and bad values raise ConfigError naming the offending key and line.
    """
    fields, scheme = _parse_items(text, source)
    try:
        if scheme is not None:
            from .presets import scheme_profile

            profile = scheme_profile(scheme)
            emitter = dataclasses.replace(profile.emitter, **fields["emitter"])
            detector = dataclasses.replace(profile.detector, **fields["detector"])
        else:
            emitter = EmitterConfig(**fields["emitter"])
            detector = DetectorConfig(**fields["detector"])
        return ExperimentConfig(
            emitter=emitter,
            optics=OpticsConfig(**fields["optics"]),
            detector=detector,
            scheme=scheme,
        )
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def read_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(cfg: ExperimentConfig) -> str:
    """Render a config so that parse_config gives back identical fields."""
    by_field = {
        (section, attr): key
        for key, (section, attr, _) in _SCHEMA.items()
        if section is not None
    }
    lines = []
    if cfg.scheme is not None:
        lines.append(f"scheme = {cfg.scheme}")
    for section in ("emitter", "optics", "detector"):
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            key = by_field[(section, f.name)]
            lines.append(f"{key} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def write_config(cfg: ExperimentConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_config(cfg))
