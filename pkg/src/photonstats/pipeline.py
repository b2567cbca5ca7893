"""End-to-end measurement pipelines: stream in, JSON-ready report out.

Every report embeds the exact analysis settings (bin width, peak spacing,
integration window, channels) plus whatever run manifest accompanied the
input file, so a run can be reproduced from the report alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import __version__, correlate, metrics, simulate, tagio
from .model import (
    HOM,
    ORTHOGONAL,
    PARALLEL,
    ExperimentConfig,
    MetricResult,
    TagStream,
)
from .presets import scheme_config, scheme_profile


@dataclass(frozen=True)
class CorrelationSettings:
    """Binning and peak-integration knobs shared by the analysis commands."""

    bin_width: int = 100
    spacing: int = 25_000
    window: int = 3_000
    n_side: int = 2
    max_delay: int | None = None
    ch_a: int = 0
    ch_b: int = 1

    def resolved_max_delay(self) -> int:
        if self.max_delay is not None:
            return self.max_delay
        need = self.n_side * self.spacing + self.window
        return -(-need // self.bin_width) * self.bin_width

    def as_dict(self) -> dict:
        return {
            "bin_width_ps": self.bin_width,
            "spacing_ps": self.spacing,
            "window_ps": self.window,
            "n_side": self.n_side,
            "max_delay_ps": self.resolved_max_delay(),
            "ch_a": self.ch_a,
            "ch_b": self.ch_b,
        }


def _provenance(*input_paths) -> dict:
    info = {"package": "photonstats", "version": __version__}
    inputs = {}
    for path in input_paths:
        if path is None:
            continue
        manifest = tagio.load_manifest(path)
        inputs[str(path)] = manifest if manifest is not None else "no manifest"
    if inputs:
        info["inputs"] = inputs
    return info


def _peaks_dict(peaks) -> dict:
    return {
        "centers_ps": peaks.centers.tolist(),
        "areas": peaks.areas.tolist(),
        "errors": peaks.errors.tolist(),
        "window_ps": int(peaks.window),
    }


def correlation_histogram(stream: TagStream, settings: CorrelationSettings):
    return correlate.cross_correlate(
        stream, settings.ch_a, settings.ch_b,
        bin_width=settings.bin_width, max_delay=settings.resolved_max_delay(),
    )


def analyze_g2(stream: TagStream, settings=CorrelationSettings(), source=None):
    """Zero-delay autocorrelation report from one detection stream."""
    hist = correlation_histogram(stream, settings)
    peaks = correlate.integrate_peaks(hist, settings.spacing, settings.window,
                                      settings.n_side)
    result = metrics.g2_zero(peaks)
    report = {
        "metric": "g2_zero",
        "value": result.value,
        "sigma": result.sigma,
        "peaks": _peaks_dict(peaks),
        "settings": settings.as_dict(),
        "provenance": _provenance(source),
    }
    return report, hist, peaks


def analyze_hom(parallel: TagStream, orthogonal: TagStream,
                settings=CorrelationSettings(), sources=(None, None)):
    """Two-photon-interference visibility from a parallel/orthogonal run pair."""
    hist_par = correlation_histogram(parallel, settings)
    hist_orth = correlation_histogram(orthogonal, settings)
    peaks_par = correlate.integrate_peaks(hist_par, settings.spacing,
                                          settings.window, settings.n_side)
    peaks_orth = correlate.integrate_peaks(hist_orth, settings.spacing,
                                           settings.window, settings.n_side)
    result = metrics.tpi_visibility(peaks_par, peaks_orth)
    report = {
        "metric": "tpi_visibility",
        "value": result.value,
        "sigma": result.sigma,
        "peaks_parallel": _peaks_dict(peaks_par),
        "peaks_orthogonal": _peaks_dict(peaks_orth),
        "settings": settings.as_dict(),
        "provenance": _provenance(*sources),
    }
    return report, (hist_par, hist_orth), (peaks_par, peaks_orth)


def analyze_blinking(stream: TagStream, settings=None, source=None):
    """Fit the intermittency model to peak areas over long delays."""
    if settings is None:
        settings = CorrelationSettings(n_side=80)
    hist = correlation_histogram(stream, settings)
    peaks = correlate.integrate_peaks(hist, settings.spacing, settings.window,
                                      settings.n_side)
    fit = metrics.fit_blinking(peaks)
    efficiency = metrics.blinking_efficiency(fit.a)
    report = {
        "metric": "blinking",
        "fit": fit.as_dict(),
        "bright_fraction": efficiency,
        "peaks": _peaks_dict(peaks),
        "settings": settings.as_dict(),
        "provenance": _provenance(source),
    }
    return report, hist, peaks, fit


def analyze_lifetime(stream: TagStream, sync_period, bin_width=10, offset=0,
                     channel=None, irf_sigma=None, irf=None, source=None):
    """Decay-constant report from arrival times folded on the pump clock."""
    hist = correlate.sync_histogram(stream, channel, sync_period,
                                    bin_width=bin_width, offset=offset)
    fit = metrics.fit_lifetime(hist, irf_sigma=irf_sigma, irf=irf)
    report = {
        "metric": "lifetime",
        "fit": fit.as_dict(),
        "settings": {
            "sync_period_ps": int(sync_period),
            "bin_width_ps": int(bin_width),
            "offset_ps": int(offset),
            "channel": channel,
            "irf_sigma_ps": fit.irf_sigma,
        },
        "provenance": _provenance(source),
    }
    return report, hist, fit


def run_simulation(config: ExperimentConfig, n_pulses, seed, workers=None):
    """Simulate one run and assemble its manifest payload."""
    stream, stats = simulate.simulate_experiment(config, n_pulses, seed,
                                                 workers=workers)
    manifest = {
        "config": config,
        "n_pulses": int(n_pulses),
        "seed": int(seed),
        "stats": stats.as_dict(),
        "n_tags": len(stream),
    }
    return stream, stats, manifest


def characterize(scheme_or_config, n_pulses, seed, settings=CorrelationSettings(),
                 workers=None):
    """One scheme end to end: autocorrelation plus both interference runs.

    Returns the consolidated report and the per-stage artifacts (streams,
    histograms, peak areas) for plotting or archival.
    """
    if isinstance(scheme_or_config, ExperimentConfig):
        base = scheme_or_config
        targets = scheme_profile(base.scheme).targets if base.scheme else None
    else:
        base = scheme_config(scheme_or_config)
        targets = scheme_profile(scheme_or_config).targets

    runs = {}
    artifacts = {}
    for label, optics_kwargs, run_seed in (
        ("hbt", dict(mode="hbt"), seed),
        ("hom_parallel", dict(mode=HOM, polarization=PARALLEL), seed + 1),
        ("hom_orthogonal", dict(mode=HOM, polarization=ORTHOGONAL), seed + 2),
    ):
        cfg = replace(base, optics=replace(base.optics, **optics_kwargs))
        stream, _, manifest = run_simulation(cfg, n_pulses, run_seed, workers=workers)
        runs[label] = stream
        artifacts[label] = {"manifest": manifest}

    g2_report, hist_hbt, peaks_hbt = analyze_g2(runs["hbt"], settings)
    hom_report, (hist_par, hist_orth), (peaks_par, peaks_orth) = analyze_hom(
        runs["hom_parallel"], runs["hom_orthogonal"], settings
    )
    g2 = MetricResult(g2_report["value"], g2_report["sigma"])
    vis = MetricResult(hom_report["value"], hom_report["sigma"])
    ms = metrics.corrected_indistinguishability(vis, g2)

    report = {
        "metric": "characterize",
        "scheme": base.scheme,
        "n_pulses": int(n_pulses),
        "seed": int(seed),
        "g2": g2.as_dict(),
        "visibility": vis.as_dict(),
        "indistinguishability": ms.as_dict(),
        "settings": settings.as_dict(),
        "provenance": {"package": "photonstats", "version": __version__},
    }
    if targets is not None:
        report["targets"] = targets.as_dict()
        report["deviations_sigma"] = {
            "g2": _pull(g2, targets.g2, targets.g2_sigma),
            "visibility": _pull(vis, targets.visibility, targets.visibility_sigma),
            "indistinguishability": _pull(
                ms, targets.indistinguishability, targets.indistinguishability_sigma
            ),
        }

    artifacts.update(
        streams=runs,
        histograms={"hbt": hist_hbt, "hom_parallel": hist_par, "hom_orthogonal": hist_orth},
        peaks={"hbt": peaks_hbt, "hom_parallel": peaks_par, "hom_orthogonal": peaks_orth},
    )
    return report, artifacts


def _pull(result: MetricResult, target, target_sigma) -> float:
    scale = max((result.sigma**2 + target_sigma**2) ** 0.5, 1e-12)
    return float((result.value - target) / scale)
