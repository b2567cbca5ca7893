import hashlib
import json

import pytest

from photonstats.cli import main

REFERENCE_BUDGET_CSV = """\
element,transmission
90:10 splitter,0.88
cryostat window,0.98
12 nm bandpass,0.97
variable bandpass,0.36
camera beam sampler,0.93
mirrors (combined),0.93
fibers and connectors,0.96
detector,0.94
"""


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def la_phonon_run(tmp_path_factory):
    """One small simulated autocorrelation run, shared across CLI tests."""
    root = tmp_path_factory.mktemp("cli_run")
    cfg = root / "la.cfg"
    out = root / "run.ttag"
    assert main(["preset", "--name", "la_phonon", "--mode", "hbt", "-o", str(cfg)]) == 0
    assert main(["simulate", "-c", str(cfg), "-o", str(out),
                 "--seed", "7", "--pulses", "4e5"]) == 0
    return root, cfg, out


class TestSimulate:
    def test_deterministic_output_checksum(self, la_phonon_run):
        root, cfg, out = la_phonon_run
        again = root / "again.ttag"
        assert main(["simulate", "-c", str(cfg), "-o", str(again),
                     "--seed", "7", "--pulses", "4e5"]) == 0
        assert _sha(out) == _sha(again)

    def test_manifest_written_with_settings(self, la_phonon_run):
        root, cfg, out = la_phonon_run
        manifest = json.loads((root / "run.ttag.manifest.json").read_text())
        assert manifest["seed"] == 7
        assert manifest["n_pulses"] == 400_000
        assert manifest["config"]["emitter"]["t1"] == 300.0

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("emiter.t1_ps = 300\n")
        out = tmp_path / "x.ttag"
        assert main(["simulate", "-c", str(bad), "-o", str(out), "--pulses", "10"]) == 2
        assert "emiter.t1_ps" in capsys.readouterr().err

    def test_missing_pulse_count_exits_2(self, la_phonon_run):
        root, cfg, _ = la_phonon_run
        assert main(["simulate", "-c", str(cfg), "-o", str(root / "y.ttag")]) == 2

    def test_duration_flag(self, la_phonon_run, tmp_path):
        root, cfg, _ = la_phonon_run
        out = tmp_path / "d.ttag"
        assert main(["simulate", "-c", str(cfg), "-o", str(out),
                     "--duration-ms", "0.01"]) == 0
        assert out.exists()


class TestG2Command:
    def test_default_prefixes_of_commands_do_not_collide(self, la_phonon_run):
        root, cfg, out = la_phonon_run
        assert main(["g2", "-i", str(out), "--no-figure"]) == 0
        assert main(["lifetime", "-i", str(out), "--no-figure",
                     "--offset", "-2000", "--irf-sigma", "20"]) == 0
        g2_report = json.loads((root / "run.g2.json").read_text())
        lt_report = json.loads((root / "run.lifetime.json").read_text())
        assert g2_report["metric"] == "g2_zero"
        assert lt_report["metric"] == "lifetime"

    def test_report_histogram_and_figure(self, la_phonon_run):
        root, cfg, out = la_phonon_run
        prefix = root / "g2out"
        assert main(["g2", "-i", str(out), "-o", str(prefix)]) == 0
        report = json.loads(prefix.with_suffix(".json").read_text())
        assert 0.005 < report["value"] < 0.04
        assert report["settings"]["window_ps"] == 3_000
        assert report["settings"]["spacing_ps"] == 25_000
        assert report["settings"]["bin_width_ps"] == 100
        # the run manifest is embedded so the report is self-describing
        embedded = report["provenance"]["inputs"][str(out)]
        assert embedded["seed"] == 7
        assert prefix.with_suffix(".csv").exists()
        assert prefix.with_suffix(".png").exists()

    def test_missing_input_exits_3(self, tmp_path, capsys):
        assert main(["g2", "-i", str(tmp_path / "no.ttag")]) == 3

    def test_no_figure_flag(self, la_phonon_run):
        root, cfg, out = la_phonon_run
        prefix = root / "nofig"
        assert main(["g2", "-i", str(out), "-o", str(prefix), "--no-figure"]) == 0
        assert not prefix.with_suffix(".png").exists()


class TestHomCommand:
    def test_self_comparison_gives_zero_visibility(self, la_phonon_run):
        root, cfg, out = la_phonon_run
        prefix = root / "hom_self"
        assert main(["hom", "--parallel", str(out), "--orthogonal", str(out),
                     "-o", str(prefix)]) == 0
        report = json.loads(prefix.with_suffix(".json").read_text())
        assert report["value"] == 0.0
        assert (root / "hom_self.parallel.csv").exists()
        assert (root / "hom_self.orthogonal.csv").exists()
        assert prefix.with_suffix(".png").exists()


class TestBlinkingCommand:
    def test_full_report_on_blinking_stream(self, tmp_path):
        cfg = tmp_path / "blink.cfg"
        out = tmp_path / "blink.ttag"
        assert main(["preset", "--name", "blinking", "-o", str(cfg)]) == 0
        assert main(["simulate", "-c", str(cfg), "-o", str(out),
                     "--seed", "4", "--pulses", "6e5"]) == 0
        prefix = tmp_path / "bl"
        assert main(["blinking", "-i", str(out), "-o", str(prefix)]) == 0
        report = json.loads(prefix.with_suffix(".json").read_text())
        assert report["fit"]["no_blinking"] is False
        assert report["fit"]["blink_strength"]["value"] == pytest.approx(2.71, rel=0.15)
        assert 0.2 < report["bright_fraction"] < 0.35
        assert prefix.with_suffix(".csv").exists()
        assert prefix.with_suffix(".png").exists()

    def test_all_zero_peaks_exits_3(self, tmp_path, capsys):
        from photonstats import tagio
        from photonstats.model import TagStream
        import numpy as np

        # two far-separated tags: histogram covers the peaks but holds nothing
        stream = TagStream(np.array([0, 1], np.uint8),
                           np.array([0, 100_000_000], np.int64), 2)
        path = tmp_path / "sparse.ttag"
        tagio.write_tags(stream, path)
        assert main(["blinking", "-i", str(path), "--n-side", "10"]) == 3


class TestLifetimeCommand:
    def test_laser_reference_is_resolution_limited(self, tmp_path):
        cfg = tmp_path / "laser.cfg"
        out = tmp_path / "laser.ttag"
        assert main(["preset", "--name", "laser_reference", "-o", str(cfg)]) == 0
        assert main(["simulate", "-c", str(cfg), "-o", str(out),
                     "--seed", "3", "--pulses", "1e5"]) == 0
        prefix = tmp_path / "lt"
        assert main(["lifetime", "-i", str(out), "-o", str(prefix),
                     "--offset", "-1000", "--irf-sigma", "20"]) == 0
        report = json.loads(prefix.with_suffix(".json").read_text())
        assert report["fit"]["resolution_limited"] is True
        assert report["fit"]["t1_ps"]["value"] < 10.0

    def test_conflicting_response_arguments_exit_2(self, la_phonon_run, tmp_path):
        root, cfg, out = la_phonon_run
        fake_irf = tmp_path / "irf.csv"
        fake_irf.write_text("# bin_width_ps=10\n# origin_ps=0\n0,1\n")
        assert main(["lifetime", "-i", str(out), "--irf-sigma", "20",
                     "--irf", str(fake_irf)]) == 2


class TestCharacterizeCommand:
    def test_ideal_scheme_full_pipeline(self, tmp_path):
        out_dir = tmp_path / "ideal"
        assert main(["characterize", "--scheme", "ideal", "--pulses", "2e5",
                     "--seed", "1", "-d", str(out_dir)]) == 0
        report = json.loads((out_dir / "characterize.json").read_text())
        assert report["g2"]["value"] == 0.0
        assert report["visibility"]["value"] > 0.995
        assert report["indistinguishability"]["value"] > 0.995
        for name in ("hbt.csv", "hom_parallel.csv", "hom_orthogonal.csv",
                     "hbt.png", "hom.png"):
            assert (out_dir / name).exists()

    def test_config_must_name_scheme(self, tmp_path, capsys):
        cfg = tmp_path / "anon.cfg"
        cfg.write_text("emitter.t1_ps = 300\n")
        assert main(["characterize", "-c", str(cfg), "--pulses", "1e4"]) == 2
        assert "scheme" in capsys.readouterr().err


class TestBudgetCommand:
    def test_reference_table(self, tmp_path, capsys):
        csv = tmp_path / "losses.csv"
        csv.write_text(REFERENCE_BUDGET_CSV)
        report_path = tmp_path / "budget.json"
        assert main(["budget", "-b", str(csv), "--click-rate", "400e3",
                     "--rep-rate", "80e6", "-o", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        assert abs(report["total_transmission"] - 0.235) < 5e-4
        assert report["overall_efficiency"] == pytest.approx(0.005)
        assert abs(report["corrected_efficiency"] - 0.021) < 1e-3

    def test_bad_transmission_names_line(self, tmp_path, capsys):
        csv = tmp_path / "losses.csv"
        csv.write_text("element,transmission\nok,0.5\nbroken,1.2\n")
        assert main(["budget", "-b", str(csv), "--click-rate", "1e5"]) == 2
        assert ":3" in capsys.readouterr().err

    def test_empty_component_list(self, tmp_path, capsys):
        csv = tmp_path / "losses.csv"
        csv.write_text("element,transmission\n")
        assert main(["budget", "-b", str(csv), "--click-rate", "400e3"]) == 0
        assert "total transmission = 1.0000" in capsys.readouterr().out


class TestPresetCommand:
    def test_list(self, capsys):
        assert main(["preset", "--list"]) == 0
        assert "la_phonon" in capsys.readouterr().out

    def test_requires_name_and_output(self, capsys):
        assert main(["preset"]) == 2
