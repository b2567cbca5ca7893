"""Command-line surface: simulate runs and turn tag files into reports.

Every analysis command writes a JSON report plus plot-ready CSV data and a
rendered PNG figure alongside. Exit codes: 0 success, 2 configuration
error, 3 data error, 4 fit failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, configfile, correlate, metrics, pipeline, plots, tagio
from .model import ConfigError, DataError, FitError, LossBudget
from .pipeline import CorrelationSettings
from .presets import available_schemes, scheme_config


def _count(text):
    """Integer argument accepting scientific notation like 1e8."""
    value = float(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive count, got {text!r}")
    return int(round(value))


def _add_correlation_args(parser, n_side=2):
    group = parser.add_argument_group("correlation settings")
    group.add_argument("--bin-width", type=int, default=100, metavar="PS",
                       help="histogram bin width in ps (default 100)")
    group.add_argument("--spacing", type=int, default=25_000, metavar="PS",
                       help="nominal peak spacing in ps (default 25000)")
    group.add_argument("--window", type=int, default=3_000, metavar="PS",
                       help="peak integration window in ps (default 3000)")
    group.add_argument("--n-side", type=int, default=n_side, metavar="N",
                       help=f"side peaks per side (default {n_side})")
    group.add_argument("--max-delay", type=int, default=None, metavar="PS",
                       help="correlation range; default covers all peaks")
    group.add_argument("--ch-a", type=int, default=0, help="first channel (default 0)")
    group.add_argument("--ch-b", type=int, default=1, help="second channel (default 1)")


def _settings(args) -> CorrelationSettings:
    return CorrelationSettings(
        bin_width=args.bin_width, spacing=args.spacing, window=args.window,
        n_side=args.n_side, max_delay=args.max_delay,
        ch_a=args.ch_a, ch_b=args.ch_b,
    )


def _read_stream(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    if path.suffix.lower() == ".csv":
        return tagio.read_tags_csv(path)
    return tagio.read_tags(path)


def _write_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prefix(args, input_path, suffix):
    if args.out_prefix:
        return Path(args.out_prefix)
    stem = Path(input_path).with_suffix("")
    return stem.with_name(f"{stem.name}.{suffix}")


def _out(prefix, extension):
    # plain concatenation: Path.with_suffix would eat dotted prefixes like
    # run.g2 and make different commands overwrite each other
    return Path(f"{prefix}.{extension}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    cfg = configfile.read_config(args.config)
    if args.pulses is None and args.duration_ms is None:
        raise ConfigError("specify --pulses or --duration-ms")
    pulses = args.pulses
    if pulses is None:
        pulses = max(1, int(args.duration_ms * 1e-3 * cfg.emitter.rep_rate))
    stream, stats, manifest = pipeline.run_simulation(
        cfg, pulses, args.seed, workers=args.workers
    )
    tagio.write_tags(stream, args.output)
    manifest["config_file"] = str(args.config)
    tagio.write_manifest(args.output, manifest)
    if args.csv:
        tagio.write_tags_csv(stream, str(args.output) + ".csv")
    print(f"wrote {len(stream)} tags to {args.output} "
          f"({stats.photon_tags} photon, {stats.dark_tags} dark)")
    return 0


def cmd_g2(args):
    stream = _read_stream(args.input)
    report, hist, peaks = pipeline.analyze_g2(stream, _settings(args), source=args.input)
    prefix = _prefix(args, args.input, "g2")
    _write_report(report, _out(prefix, "json"))
    correlate.write_histogram_csv(hist, _out(prefix, "csv"))
    if not args.no_figure:
        plots.save_correlation_figure(hist, peaks, _out(prefix, "png"),
                                      title="Autocorrelation")
    print(f"g2(0) = {report['value']:.5f} +/- {report['sigma']:.5f}")
    return 0


def cmd_hom(args):
    parallel = _read_stream(args.parallel)
    orthogonal = _read_stream(args.orthogonal)
    report, (hist_par, hist_orth), (peaks_par, peaks_orth) = pipeline.analyze_hom(
        parallel, orthogonal, _settings(args),
        sources=(args.parallel, args.orthogonal),
    )
    prefix = _prefix(args, args.parallel, "hom")
    _write_report(report, _out(prefix, "json"))
    correlate.write_histogram_csv(hist_par, _out(prefix, "parallel.csv"))
    correlate.write_histogram_csv(hist_orth, _out(prefix, "orthogonal.csv"))
    if not args.no_figure:
        plots.save_hom_figure(hist_par, hist_orth, peaks_par, peaks_orth,
                              _out(prefix, "png"))
    print(f"visibility = {report['value']:.5f} +/- {report['sigma']:.5f}")
    return 0


def cmd_blinking(args):
    stream = _read_stream(args.input)
    report, hist, peaks, fit = pipeline.analyze_blinking(
        stream, _settings(args), source=args.input
    )
    prefix = _prefix(args, args.input, "blinking")
    _write_report(report, _out(prefix, "json"))
    correlate.write_histogram_csv(hist, _out(prefix, "csv"))
    if not args.no_figure:
        plots.save_blinking_figure(peaks, fit, _out(prefix, "png"))
    if fit.no_blinking:
        print("no blinking detected")
    else:
        print(f"blink strength = {fit.a:.4g} +/- {fit.sigma_a:.2g}, "
              f"timescale = {fit.tau_b * 1e-3:.4g} +/- {fit.sigma_tau_b * 1e-3:.2g} ns, "
              f"bright fraction = {report['bright_fraction']:.4f}")
    return 0


def cmd_lifetime(args):
    stream = _read_stream(args.input)
    irf_hist = None
    irf_sigma = args.irf_sigma
    if args.irf is not None:
        if irf_sigma is not None:
            raise ConfigError("pass either --irf-sigma or --irf, not both")
        irf_hist = correlate.read_histogram_csv(args.irf)
    elif irf_sigma is None:
        irf_sigma = 0.0
    report, hist, fit = pipeline.analyze_lifetime(
        stream, args.sync_period, bin_width=args.bin_width, offset=args.offset,
        channel=args.channel, irf_sigma=irf_sigma, irf=irf_hist, source=args.input,
    )
    prefix = _prefix(args, args.input, "lifetime")
    _write_report(report, _out(prefix, "json"))
    correlate.write_histogram_csv(hist, _out(prefix, "csv"))
    if not args.no_figure:
        plots.save_lifetime_figure(hist, fit, _out(prefix, "png"))
    note = " (resolution limited)" if fit.resolution_limited else ""
    print(f"t1 = {fit.t1:.4g} +/- {fit.sigma_t1:.2g} ps{note}")
    return 0


def cmd_characterize(args):
    if args.scheme:
        target = args.scheme
    else:
        cfg = configfile.read_config(args.config)
        if cfg.scheme is None:
            raise ConfigError(f"{args.config}: config must name a scheme")
        target = cfg
    report, artifacts = pipeline.characterize(
        target, args.pulses, args.seed, _settings(args), workers=args.workers
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_report(report, out_dir / "characterize.json")
    for label, hist in artifacts["histograms"].items():
        correlate.write_histogram_csv(hist, out_dir / f"{label}.csv")
    if not args.no_figure:
        plots.save_correlation_figure(
            artifacts["histograms"]["hbt"], artifacts["peaks"]["hbt"],
            out_dir / "hbt.png", title="Autocorrelation",
        )
        plots.save_hom_figure(
            artifacts["histograms"]["hom_parallel"],
            artifacts["histograms"]["hom_orthogonal"],
            artifacts["peaks"]["hom_parallel"],
            artifacts["peaks"]["hom_orthogonal"],
            out_dir / "hom.png",
        )
    if args.save_tags:
        for label, stream in artifacts["streams"].items():
            path = out_dir / f"{label}.ttag"
            tagio.write_tags(stream, path)
            tagio.write_manifest(path, artifacts[label]["manifest"])
    print(f"scheme {report['scheme']}: "
          f"g2(0) = {report['g2']['value']:.4f} +/- {report['g2']['sigma']:.4f}, "
          f"V = {report['visibility']['value']:.4f} +/- {report['visibility']['sigma']:.4f}, "
          f"Ms = {report['indistinguishability']['value']:.4f} "
          f"+/- {report['indistinguishability']['sigma']:.4f}")
    return 0


def _parse_budget_csv(path):
    components = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'name,transmission'")
            name, value = parts
            if lineno == 1 and value.lower() in ("transmission", "efficiency"):
                continue
            try:
                transmission = float(value)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: bad transmission {value!r} for {name!r}"
                ) from None
            if not 0.0 < transmission <= 1.0:
                raise ConfigError(
                    f"{path}:{lineno}: transmission {transmission} outside (0, 1]"
                )
            components.append((name, transmission))
    return components


def cmd_budget(args):
    budget = LossBudget(_parse_budget_csv(args.budget), args.click_rate, args.rep_rate)
    result = metrics.efficiency_budget(budget)
    report = {
        "metric": "efficiency_budget",
        **result.as_dict(),
        "components": [{"name": n, "transmission": t} for n, t in budget.components],
        "settings": {"click_rate_hz": args.click_rate, "rep_rate_hz": args.rep_rate},
        "provenance": {"package": "photonstats", "version": __version__},
    }
    if args.report:
        _write_report(report, args.report)
    print(f"total transmission = {result.total_transmission:.4f}, "
          f"overall efficiency = {result.overall_efficiency:.4%}, "
          f"corrected efficiency = {result.corrected_efficiency:.4%}")
    return 0


def cmd_preset(args):
    if args.list:
        for name in available_schemes():
            print(name)
        return 0
    if not args.name or not args.output:
        raise ConfigError("pass --name and -o, or --list")
    cfg = scheme_config(args.name, mode=args.mode, polarization=args.polarization)
    configfile.write_config(cfg, args.output)
    print(f"wrote {args.name} preset to {args.output}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonstats",
        description="Simulate and characterize pulsed single-photon sources "
                    "from time-tag streams.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a time-tag file from a config")
    p.add_argument("-c", "--config", required=True, help="run configuration file")
    p.add_argument("-o", "--output", required=True, help="output tag file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pulses", type=_count, default=None, help="number of pulses (e.g. 1e7)")
    p.add_argument("--duration-ms", type=float, default=None, help="run length instead of --pulses")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: PHOTONSTATS_THREADS or 1)")
    p.add_argument("--csv", action="store_true", help="also write channel,t_ps CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("g2", help="zero-delay autocorrelation from a tag file")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--out-prefix", default=None,
                   help="output prefix (default: <input>.g2)")
    p.add_argument("--no-figure", action="store_true")
    _add_correlation_args(p)
    p.set_defaults(func=cmd_g2)

    p = sub.add_parser("hom", help="two-photon-interference visibility")
    p.add_argument("--parallel", required=True, help="parallel-polarization tag file")
    p.add_argument("--orthogonal", required=True, help="orthogonal-polarization tag file")
    p.add_argument("-o", "--out-prefix", default=None)
    p.add_argument("--no-figure", action="store_true")
    _add_correlation_args(p)
    p.set_defaults(func=cmd_hom)

    p = sub.add_parser("blinking", help="fit emitter intermittency from peak areas")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--out-prefix", default=None)
    p.add_argument("--no-figure", action="store_true")
    _add_correlation_args(p, n_side=80)
    p.set_defaults(func=cmd_blinking)

    p = sub.add_parser("lifetime", help="fit the decay constant vs the pump clock")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--out-prefix", default=None)
    p.add_argument("--sync-period", type=int, default=12_500, metavar="PS")
    p.add_argument("--bin-width", type=int, default=10, metavar="PS")
    p.add_argument("--offset", type=int, default=0, metavar="PS")
    p.add_argument("--channel", type=int, default=None,
                   help="restrict to one channel (default: all)")
    p.add_argument("--irf-sigma", type=float, default=None, metavar="PS",
                   help="Gaussian response width (default 0)")
    p.add_argument("--irf", default=None,
                   help="measured response histogram CSV instead of --irf-sigma")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_lifetime)

    p = sub.add_parser("characterize", help="simulate and analyze one scheme end to end")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--scheme", choices=available_schemes())
    group.add_argument("-c", "--config", help="config file naming a scheme")
    p.add_argument("--pulses", type=_count, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-d", "--out-dir", default="characterize_out")
    p.add_argument("--save-tags", action="store_true", help="keep the simulated tag files")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-figure", action="store_true")
    _add_correlation_args(p)
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("budget", help="efficiency from a loss budget CSV")
    p.add_argument("-b", "--budget", required=True, help="CSV of name,transmission rows")
    p.add_argument("--click-rate", type=float, required=True, metavar="HZ")
    p.add_argument("--rep-rate", type=float, default=80e6, metavar="HZ")
    p.add_argument("-o", "--report", default=None, help="optional JSON report path")
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("preset", help="write a built-in scheme profile as a config file")
    p.add_argument("--name", choices=available_schemes())
    p.add_argument("-o", "--output")
    p.add_argument("--mode", choices=["hbt", "hom"], default="hbt")
    p.add_argument("--polarization", choices=["parallel", "orthogonal"],
                   default="parallel")
    p.add_argument("--list", action="store_true", help="list available schemes")
    p.set_defaults(func=cmd_preset)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
