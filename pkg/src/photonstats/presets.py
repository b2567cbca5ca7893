"""Built-in emitter profiles for the supported excitation schemes.

Each profile is a phenomenological parameterization: lifetime, re-excitation
probability and spectral-diffusion width are tuned so that the full
simulate -> correlate -> metrics pipeline reproduces that scheme's reference
figures of merit, not to model carrier dynamics. The target values are kept
alongside so consolidated reports can show measured-vs-expected columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfcx

from .model import (
    HBT,
    PARALLEL,
    ConfigError,
    DetectorConfig,
    EmitterConfig,
    ExperimentConfig,
    OpticsConfig,
)


def mean_overlap(sigma_detuning, gamma) -> float:
    """Mean pairwise wavepacket overlap under Gaussian spectral diffusion.

    For per-photon detunings ~ N(0, sigma) the pair offset is
    N(0, sqrt(2)*sigma) and E[gamma^2/(gamma^2 + dw^2)] has the closed form
    sqrt(pi/2)/s * erfcx(1/(sqrt(2)*s)) with s = sqrt(2)*sigma/gamma.
    """
    if sigma_detuning == 0:
        return 1.0
    s = np.sqrt(2.0) * sigma_detuning / gamma
    return float(np.sqrt(np.pi / 2.0) / s * erfcx(1.0 / (np.sqrt(2.0) * s)))


def detuning_for_overlap(target, gamma) -> float:
    """Spectral-diffusion width giving a requested mean pairwise overlap."""
    if not 0.0 < target <= 1.0:
        raise ConfigError(f"target overlap must be in (0, 1], got {target!r}")
    if target == 1.0:
        return 0.0
    return float(brentq(lambda s: mean_overlap(s, gamma) - target, 1e-12, 50.0 * gamma))


@dataclass(frozen=True)
class SchemeTargets:
    """Reference figures of merit a profile is tuned to reproduce."""

    g2: float
    g2_sigma: float
    visibility: float
    visibility_sigma: float
    indistinguishability: float
    indistinguishability_sigma: float

    def as_dict(self) -> dict:
        return {
            "g2": {"value": self.g2, "sigma": self.g2_sigma},
            "visibility": {"value": self.visibility, "sigma": self.visibility_sigma},
            "indistinguishability": {
                "value": self.indistinguishability,
                "sigma": self.indistinguishability_sigma,
            },
        }


@dataclass(frozen=True)
class SchemeProfile:
    name: str
    emitter: EmitterConfig
    detector: DetectorConfig
    targets: SchemeTargets | None = None


# benign detector: efficient, mild jitter, no dead time, faint dark rate
_DETECTOR = DetectorConfig(efficiency=0.85, jitter_sigma=20.0, dead_time=0.0,
                           dark_rate=100.0)

# Mean-overlap setpoints per scheme. Multi-photon slots route independently
# at the splitter, which costs extra central-peak coincidences, so the
# overlap is set slightly above the target indistinguishability to land the
# pipeline on the reference (g2, V) pair; see _overlap_setpoint below.
_SETPOINTS = {
    "la_phonon": dict(t1=300.0, g2=0.017, visibility=0.917),
    "resonance_1": dict(t1=500.0, g2=0.029, visibility=0.581),
    "resonance_2": dict(t1=400.0, g2=0.008, visibility=0.845),
}


def _epsilon_for_g2(g):
    return (1.0 - g - np.sqrt(1.0 - 2.0 * g)) / g if g else 0.0


def _overlap_setpoint(g2, visibility):
    """Invert the splitter bookkeeping: mean overlap hitting (g2, V).

    Expected normalized central coincidences per interference slot with
    re-excitation probability eps and mean pair overlap m:
      parallel    (1-eps)^2 (1-m)/2 + 3 eps (1-eps) + 3 eps^2
      orthogonal  (1-eps)^2 / 2     + 3 eps (1-eps) + 3 eps^2
    (one-per-arm slots interfere; three- and four-photon slots route each
    photon independently, contributing C(n,2)/2 cross pairs).
    """
    eps = _epsilon_for_g2(g2)
    multi = 3.0 * eps * (1.0 - eps) + 3.0 * eps**2
    orth = (1.0 - eps) ** 2 / 2.0 + multi
    need = (1.0 - visibility) * orth - multi
    return 1.0 - 2.0 * need / (1.0 - eps) ** 2


def _scheme_emitter(t1, g2, visibility):
    gamma = 1.0 / t1
    eps = _epsilon_for_g2(g2)
    sigma = detuning_for_overlap(_overlap_setpoint(g2, visibility), gamma)
    return EmitterConfig(t1=t1, epsilon=float(eps), sigma_detuning=sigma)


_TABLE = {
    "above_band": SchemeTargets(0.194, 0.003, 0.206, 0.006, 0.496, 0.013),
    "la_phonon": SchemeTargets(0.017, 0.001, 0.917, 0.002, 0.950, 0.004),
    "resonance_1": SchemeTargets(0.029, 0.001, 0.581, 0.003, 0.628, 0.005),
    "resonance_2": SchemeTargets(0.008, 0.001, 0.845, 0.005, 0.860, 0.006),
}


def _build_profiles():
    profiles = {}
    for name, sp in _SETPOINTS.items():
        profiles[name] = SchemeProfile(
            name=name,
            emitter=_scheme_emitter(sp["t1"], sp["g2"], sp["visibility"]),
            detector=_DETECTOR,
            targets=_TABLE[name],
        )
    # Slow refill feeds the second photon through an Exp(refill_tau) delay,
    # producing the decaying pedestal around zero delay. The window catches
    # only part of it, so epsilon and the overlap are retuned numerically;
    # values frozen from a calibration sweep of the full pipeline.
    profiles["above_band"] = SchemeProfile(
        name="above_band",
        emitter=EmitterConfig(
            t1=700.0,
            epsilon=0.26574,
            sigma_detuning=0.0012893,
            refill_tau=2500.0,
        ),
        detector=_DETECTOR,
        targets=_TABLE["above_band"],
    )
    profiles["ideal"] = SchemeProfile(
        name="ideal",
        emitter=EmitterConfig(t1=300.0),
        detector=DetectorConfig(efficiency=1.0),
    )
    profiles["laser_reference"] = SchemeProfile(
        name="laser_reference",
        emitter=EmitterConfig(t1=2.0),
        detector=_DETECTOR,
    )
    blink = profiles["la_phonon"].emitter
    profiles["blinking"] = SchemeProfile(
        name="blinking",
        emitter=EmitterConfig(
            t1=blink.t1,
            epsilon=blink.epsilon,
            sigma_detuning=blink.sigma_detuning,
            blink_strength=2.71,
            blink_tau=294_000.0,
        ),
        detector=_DETECTOR,
    )
    return profiles


PROFILES = _build_profiles()


def available_schemes() -> list[str]:
    return sorted(PROFILES)


def scheme_profile(name) -> SchemeProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(
            f"unknown scheme {name!r}; available: {', '.join(available_schemes())}"
        ) from None


def scheme_config(name, mode=HBT, polarization=PARALLEL) -> ExperimentConfig:
    """ExperimentConfig for a named scheme and measurement topology."""
    profile = scheme_profile(name)
    return ExperimentConfig(
        emitter=profile.emitter,
        optics=OpticsConfig(mode=mode, polarization=polarization),
        detector=profile.detector,
        scheme=name,
    )
