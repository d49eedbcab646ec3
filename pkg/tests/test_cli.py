"""Tests for the hlcomp command-line interface."""

import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from hlcomp.audio import read_wav, write_responses, write_wav
from hlcomp.cli import cli
from hlcomp.config import ModelConfig
from hlcomp.formats import format_output
from hlcomp.metrics import ChannelResponseSet, SignalBuffer
from hlcomp.prescribe import nalr_gain, prescription_to_gaincurve
from hlcomp.audiogram import standard_audiogram
from hlcomp.spacing import SpacingRequest, propose_cfs


@pytest.fixture
def runner():
    """Create a Click CLI test runner."""
    return CliRunner()


@pytest.fixture
def small_model(tmp_path):
    """A model small enough for the CLI tests to run in well under a second."""
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"k": 16, "nfft": 1024}))
    return path


@pytest.fixture
def identity_model(tmp_path):
    """Zero loss leaves this model unchanged: Q >= 1 everywhere and no +1 on impaired Q."""
    path = tmp_path / "identity.json"
    path.write_text(json.dumps({"k": 16, "nfft": 1024, "q_min": 1.0, "plus_one": False}))
    return path


def write_audiogram(path, points):
    lines = ["freq_hz,hl_db"] + [f"{f},{hl}" for f, hl in points]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestTopLevel:
    def test_help_lists_commands(self, runner):
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        for name in ["spacing", "gnr-sweep", "compensate", "analyze-gain", "metrics", "nalr", "noise",
                     "apply-fir", "config", "version"]:
            assert name in result.output

    def test_version(self, runner):
        result = runner.invoke(cli, ["version"])
        assert result.exit_code == 0
        assert "hlcomp, version" in result.output


class TestSpacing:
    def test_log_to_stdout(self, runner):
        result = runner.invoke(cli, ["spacing", "--strategy", "log", "--cf-min", "100", "--cf-max", "10000", "--k", "3"])
        assert result.exit_code == 0, result.output
        assert "index,cf_hz\n0,100\n1,1000\n2,10000" in result.output

    def test_file_output_and_sidecar(self, runner, tmp_path):
        out = tmp_path / "cfs.csv"
        result = runner.invoke(cli, ["spacing", "--k", "3", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert out.read_text() == "index,cf_hz\n0,100\n1,1000\n2,10000\n"
        sidecar = json.loads((tmp_path / "cfs.json").read_text())
        assert sidecar["command"] == "spacing"
        assert sidecar["spacing"]["k"] == 3
        assert sidecar["model"]["cf_min_hz"] == 100.0

    def test_proposed_matches_library(self, runner, tmp_path):
        out = tmp_path / "cfs.csv"
        result = runner.invoke(cli, ["spacing", "--strategy", "proposed", "--delta", "0.5", "-o", str(out)])
        assert result.exit_code == 0, result.output
        cfs = propose_cfs(SpacingRequest(100.0, 10000.0, 0.5, ModelConfig()))
        expected = format_output([{"index": i, "cf_hz": float(cf)} for i, cf in enumerate(cfs)], "csv")
        assert out.read_text() == expected + "\n"

    def test_proposed_requires_delta(self, runner):
        result = runner.invoke(cli, ["spacing", "--strategy", "proposed"])
        assert result.exit_code == 2
        assert "--delta" in result.output

    def test_invalid_range_exits_2(self, runner):
        result = runner.invoke(cli, ["spacing", "--cf-min", "5000", "--cf-max", "1000", "--k", "3"])
        assert result.exit_code == 2
        assert "cf_min" in result.output

    def test_stall_exits_3(self, runner):
        result = runner.invoke(cli, ["spacing", "--strategy", "proposed", "--delta", "0.001"])
        assert result.exit_code == 3
        assert "stalled" in result.output

    def test_json_format(self, runner):
        result = runner.invoke(cli, ["spacing", "--k", "2", "--cf-min", "125", "--cf-max", "9900", "-f", "json"])
        assert result.exit_code == 0
        assert json.loads(result.output) == [{"index": 0, "cf_hz": 125.0}, {"index": 1, "cf_hz": 9900.0}]


class TestCompensate:
    def test_zero_loss_identity(self, runner, tmp_path, identity_model):
        audiogram = write_audiogram(tmp_path / "zero.csv", [(1000, 0)])
        out = tmp_path / "out"
        result = runner.invoke(
            cli,
            ["compensate", "--audiogram", str(audiogram), "--model", str(identity_model), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        for name in ["gain.csv", "fir.wav", "fir.csv", "residual.json", "config.json"]:
            assert (out / name).exists()
        rows = read_csv(out / "gain.csv")
        assert len(rows) == 513
        assert {row["gain_linear"] for row in rows} == {"1"}
        report = json.loads((out / "residual.json").read_text())
        assert report["relative_residual"] <= 1e-12
        assert report["num_channels"] == 16
        assert "solved_fir_residual" not in report

    def test_half_gain_equals_halved_audiogram(self, runner, tmp_path, small_model):
        forty = write_audiogram(tmp_path / "forty.csv", [(1000, 40)])
        twenty = write_audiogram(tmp_path / "twenty.csv", [(1000, 20)])
        base = ["compensate", "--model", str(small_model), "--fir-taps", "128"]
        a = runner.invoke(cli, base + ["--audiogram", str(forty), "--half-gain", "--out", str(tmp_path / "a")])
        b = runner.invoke(cli, base + ["--audiogram", str(twenty), "--out", str(tmp_path / "b")])
        assert a.exit_code == 0, a.output
        assert b.exit_code == 0, b.output
        assert (tmp_path / "a" / "gain.csv").read_bytes() == (tmp_path / "b" / "gain.csv").read_bytes()
        assert (tmp_path / "a" / "fir.csv").read_bytes() == (tmp_path / "b" / "fir.csv").read_bytes()

    def test_fir_length(self, runner, tmp_path, small_model):
        out = tmp_path / "out"
        result = runner.invoke(
            cli, ["compensate", "--standard", "N3", "--model", str(small_model), "--fir-taps", "101", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        fir = read_wav(out / "fir.wav")
        assert len(fir) == 101
        assert fir.sample_rate == 32000
        assert len(read_csv(out / "fir.csv")) == 101
        config = json.loads((out / "config.json").read_text())
        assert config["audiogram"] == "standard:N3"
        assert len(config["spacing"]["cfs_hz"]) == 16

    def test_time_domain_method(self, runner, tmp_path):
        model = tmp_path / "tiny.json"
        model.write_text(json.dumps({"k": 8, "nfft": 256}))
        out = tmp_path / "out"
        result = runner.invoke(
            cli,
            ["compensate", "--standard", "N3", "--model", str(model), "--method", "time", "--fir-taps", "64",
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((out / "residual.json").read_text())
        assert report["method"] == "time"
        assert report["condition_number"] > 0
        assert report["solved_fir_residual"] >= report["relative_residual"] * (1 - 1e-6)
        assert np.isfinite(report["solved_fir_residual"])
        assert len(read_wav(out / "fir.wav")) == 64

    def test_invalid_audiogram_exits_2(self, runner, tmp_path, small_model):
        bad = tmp_path / "bad.csv"
        bad.write_text("frequency,level\n1000,20\n")
        result = runner.invoke(
            cli, ["compensate", "--audiogram", str(bad), "--model", str(small_model), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2
        assert "freq_hz,hl_db" in result.output

    def test_loss_above_hl_max_exits_2(self, runner, tmp_path, small_model):
        severe = write_audiogram(tmp_path / "severe.csv", [(1000, 120)])
        result = runner.invoke(
            cli, ["compensate", "--audiogram", str(severe), "--model", str(small_model), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2
        assert "hl_max" in result.output

    def test_audiogram_required(self, runner, tmp_path):
        result = runner.invoke(cli, ["compensate", "--out", str(tmp_path / "o")])
        assert result.exit_code == 2
        assert "--audiogram" in result.output

    def test_unknown_standard_exits_2(self, runner, tmp_path):
        result = runner.invoke(cli, ["compensate", "--standard", "N9", "--out", str(tmp_path / "o")])
        assert result.exit_code == 2
        assert "N9" in result.output

    def test_bad_model_exits_2(self, runner, tmp_path):
        model = tmp_path / "model.json"
        model.write_text(json.dumps({"cf_max_hz": 20000}))
        result = runner.invoke(
            cli, ["compensate", "--standard", "N3", "--model", str(model), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2
        assert "Nyquist" in result.output


class TestGnrSweep:
    def test_reference_size_gives_cap(self, runner, tmp_path):
        out = tmp_path / "sweep.csv"
        result = runner.invoke(
            cli,
            ["gnr-sweep", "--standard", "N3", "--k", "8", "--ref-k", "8", "--strategies", "log", "--nfft", "1024",
             "-o", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert out.read_text() == "strategy,k,gnr_db\nlog,8,300\n"
        sidecar = json.loads((tmp_path / "sweep.json").read_text())
        assert sidecar["spacing"] == {"strategies": ["log"], "k": [8], "ref_k": 8}
        assert sidecar["audiogram"] == "standard:N3"

    def test_duplicate_strategies_are_collapsed(self, runner, tmp_path):
        out = tmp_path / "sweep.csv"
        result = runner.invoke(
            cli,
            ["gnr-sweep", "--standard", "N3", "--k", "4", "--ref-k", "16", "--strategies", "log,log",
             "--nfft", "1024", "-o", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert len(read_csv(out)) == 1
        assert "Ignoring duplicate strategy" in result.output

    def test_deterministic_output(self, runner, tmp_path):
        args = ["gnr-sweep", "--standard", "N3", "--k", "4,8", "--ref-k", "32", "--nfft", "1024"]
        first = runner.invoke(cli, args + ["-o", str(tmp_path / "one.csv")])
        second = runner.invoke(cli, args + ["-o", str(tmp_path / "two.csv")])
        assert first.exit_code == 0, first.output
        assert second.exit_code == 0, second.output
        assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()
        assert [row["strategy"] for row in read_csv(tmp_path / "one.csv")] == ["log", "log", "proposed", "proposed"]

    @pytest.mark.parametrize(
        "extra,message",
        [
            (["--strategies", "mel"], "unknown strategy"),
            (["--k", "64", "--ref-k", "32"], "ref_k"),
            (["--k", "8", "--ref-k", "16", "--strict"], "4 x max(K)"),
            (["--k", "four"], "comma-separated integers"),
        ],
    )
    def test_invalid_arguments_exit_2(self, runner, extra, message):
        result = runner.invoke(cli, ["gnr-sweep", "--standard", "N3", "--nfft", "1024"] + extra)
        assert result.exit_code == 2
        assert message in result.output


class TestSignals:
    def make_noise(self, runner, path, seconds="1", rate="16000", seed="0", kind="white"):
        result = runner.invoke(
            cli,
            ["noise", "--kind", kind, "--duration", seconds, "--sample-rate", rate, "--seed", seed, "-o", str(path)],
        )
        assert result.exit_code == 0, result.output
        return path

    def test_noise_is_deterministic(self, runner, tmp_path):
        a = self.make_noise(runner, tmp_path / "a.wav", kind="speech_shaped", seed="7")
        b = self.make_noise(runner, tmp_path / "b.wav", kind="speech_shaped", seed="7")
        assert a.read_bytes() == b.read_bytes()
        sidecar = json.loads((tmp_path / "a.json").read_text())
        assert sidecar["seed"] == 7
        assert sidecar["params"]["kind"] == "speech_shaped"

    def test_analyze_identical_files(self, runner, tmp_path):
        noise = self.make_noise(runner, tmp_path / "noise.wav")
        out = tmp_path / "gain.csv"
        result = runner.invoke(
            cli, ["analyze-gain", "--in", str(noise), "--out", str(noise), "--welch-seg", "1024", "-o", str(out)]
        )
        assert result.exit_code == 0, result.output
        rows = read_csv(out)
        assert len(rows) == 513
        assert {row["gain_linear"] for row in rows} == {"1"}
        assert list(rows[0]) == ["freq_hz", "gain_linear", "gain_db"]

    def test_analyze_sample_rate_mismatch(self, runner, tmp_path):
        a = self.make_noise(runner, tmp_path / "a.wav", rate="16000")
        b = self.make_noise(runner, tmp_path / "b.wav", rate="8000")
        result = runner.invoke(cli, ["analyze-gain", "--in", str(a), "--out", str(b), "--welch-seg", "1024"])
        assert result.exit_code == 2
        assert "Sample rates differ" in result.output

    def test_apply_fir_from_csv(self, runner, tmp_path):
        noise = self.make_noise(runner, tmp_path / "noise.wav")
        fir = tmp_path / "fir.csv"
        fir.write_text("index,tap\n0,0.5\n")
        out = tmp_path / "half.wav"
        result = runner.invoke(cli, ["apply-fir", str(noise), str(fir), "-o", str(out)])
        assert result.exit_code == 0, result.output
        np.testing.assert_allclose(read_wav(out).samples, 0.5 * read_wav(noise).samples, atol=1e-7)

    def test_apply_fir_reads_tap_column_by_name(self, runner, tmp_path):
        noise = self.make_noise(runner, tmp_path / "noise.wav")
        fir = tmp_path / "fir.csv"
        fir.write_text("tap,index\n0.25,0\n")
        out = tmp_path / "quarter.wav"
        result = runner.invoke(cli, ["apply-fir", str(noise), str(fir), "-o", str(out)])
        assert result.exit_code == 0, result.output
        np.testing.assert_allclose(read_wav(out).samples, 0.25 * read_wav(noise).samples, atol=1e-7)

    def test_apply_fir_csv_without_tap_column(self, runner, tmp_path):
        noise = self.make_noise(runner, tmp_path / "noise.wav")
        fir = tmp_path / "fir.csv"
        fir.write_text("index,value\n0,0.5\n")
        result = runner.invoke(cli, ["apply-fir", str(noise), str(fir), "-o", str(tmp_path / "y.wav")])
        assert result.exit_code == 2
        assert "'tap' column" in result.output

    def test_apply_fir_rate_mismatch(self, runner, tmp_path):
        noise = self.make_noise(runner, tmp_path / "noise.wav", rate="16000")
        fir = tmp_path / "fir.wav"
        write_wav(SignalBuffer(np.array([1.0, 0.0]), 8000), fir)
        result = runner.invoke(cli, ["apply-fir", str(noise), str(fir), "-o", str(tmp_path / "y.wav")])
        assert result.exit_code == 2

    def test_nalr_fir_end_to_end(self, runner, tmp_path):
        noise = self.make_noise(runner, tmp_path / "noise.wav", seconds="20")
        fir = tmp_path / "nalr.wav"
        result = runner.invoke(
            cli, ["nalr", "--standard", "N3", "--fir", str(fir), "--sample-rate", "16000", "-o", str(tmp_path / "ig.csv")]
        )
        assert result.exit_code == 0, result.output
        processed = tmp_path / "processed.wav"
        assert runner.invoke(cli, ["apply-fir", str(noise), str(fir), "-o", str(processed)]).exit_code == 0
        out = tmp_path / "gain.csv"
        result = runner.invoke(cli, ["analyze-gain", "--in", str(noise), "--out", str(processed), "-o", str(out)])
        assert result.exit_code == 0, result.output

        rows = read_csv(out)
        freqs = np.array([float(r["freq_hz"]) for r in rows])
        measured = np.array([float(r["gain_db"]) for r in rows])
        # away from the 250 Hz corner, which a 512-tap FIR rounds off
        band = (freqs >= 400) & (freqs <= 6000)
        expected = prescription_to_gaincurve(nalr_gain(standard_audiogram("N3")), freqs[band]).gains_db
        assert np.max(np.abs(measured[band] - expected)) <= 1.0


class TestMetrics:
    @pytest.fixture
    def responses(self, tmp_path):
        rng = np.random.default_rng(0)
        # multiples of 1/8 survive the float32 file format exactly
        data = rng.integers(-16, 16, size=(3, 1600)) / 8.0
        nh = write_responses(ChannelResponseSet(data, sample_rate=16000), tmp_path / "nh.resp")
        hi = write_responses(ChannelResponseSet(data + 0.25, sample_rate=16000), tmp_path / "hi.resp")
        return nh, hi

    def report(self, runner, args):
        result = runner.invoke(cli, ["metrics"] + args)
        assert result.exit_code == 0, result.output
        return {entry["metric"]: entry for entry in json.loads(result.output)["metrics"]}

    def test_file_against_itself(self, runner, responses):
        nh, _ = responses
        report = self.report(runner, [str(nh), str(nh)])
        assert report["mae"]["value"] == 0
        assert report["composite_loss"]["value"] == 0
        assert report["ser_db"]["value"] == [300.0, 300.0, 300.0]
        assert len(report["mae"]["inputs_digest"]) == 64

    def test_constant_offset_composite(self, runner, tmp_path, responses):
        nh, hi = responses
        wav = tmp_path / "x.wav"
        write_wav(SignalBuffer(np.random.default_rng(1).standard_normal(1600) * 0.1, 16000), wav)
        report = self.report(runner, [str(nh), str(hi), "--x", str(wav), "--y", str(wav), "--gamma", "2"])
        assert report["composite_loss"]["value"] == pytest.approx(0.75, abs=1e-9)
        assert report["low_freq_penalty"]["value"] == 0
        assert report["mae"]["value"] == 0.25

    def test_report_file_and_sidecar(self, runner, tmp_path, responses):
        nh, hi = responses
        out = tmp_path / "report.json"
        result = runner.invoke(cli, ["metrics", str(nh), str(hi), "-o", str(out)])
        assert result.exit_code == 0, result.output
        data = json.loads(out.read_text())
        assert data["sample_rate"] == 16000
        segments = [e["params"]["segment_ms"] for e in data["metrics"] if e["metric"] == "segmented_mae"]
        assert segments == [1.0, 10.0, 100.0]
        assert json.loads((tmp_path / "report.config.json").read_text())["command"] == "metrics"

    def test_shape_mismatch_exits_2(self, runner, tmp_path, responses):
        nh, _ = responses
        other = write_responses(ChannelResponseSet(np.ones((2, 1600)), sample_rate=16000), tmp_path / "o.resp")
        result = runner.invoke(cli, ["metrics", str(nh), str(other)])
        assert result.exit_code == 2
        assert "shapes differ" in result.output

    def test_missing_sample_rate_exits_2(self, runner, tmp_path):
        a = write_responses(ChannelResponseSet(np.ones((1, 10))), tmp_path / "a.resp")
        result = runner.invoke(cli, ["metrics", str(a), str(a)])
        assert result.exit_code == 2
        assert "--sample-rate" in result.output

    def test_x_without_y(self, runner, tmp_path, responses):
        nh, hi = responses
        result = runner.invoke(cli, ["metrics", str(nh), str(hi), "--x", str(nh)])
        assert result.exit_code == 2


class TestNalr:
    def test_n3_to_stdout(self, runner):
        result = runner.invoke(cli, ["nalr", "--standard", "N3"])
        assert result.exit_code == 0, result.output
        assert "freq_hz,insertion_gain_db" in result.output
        assert "1000,19.65" in result.output
        assert "6000,24.4" in result.output

    def test_both_audiogram_sources_rejected(self, runner, tmp_path):
        audiogram = write_audiogram(tmp_path / "a.csv", [(1000, 40)])
        result = runner.invoke(cli, ["nalr", "--standard", "N3", "--audiogram", str(audiogram)])
        assert result.exit_code == 2
        assert "not both" in result.output

    def test_uncovered_audiogram_exits_2(self, runner, tmp_path):
        audiogram = write_audiogram(tmp_path / "a.csv", [(4000, 40), (8000, 60)])
        result = runner.invoke(cli, ["nalr", "--audiogram", str(audiogram)])
        assert result.exit_code == 2
        assert "500-2000 Hz" in result.output


class TestConfigCommands:
    def test_model_prints_defaults(self, runner):
        result = runner.invoke(cli, ["config", "model"])
        assert result.exit_code == 0
        assert json.loads(result.output) == ModelConfig().to_dict()

    def test_list_audiograms(self, runner):
        result = runner.invoke(cli, ["config", "audiograms"])
        assert result.exit_code == 0
        assert "N3" in result.output.split()

    def test_show_audiogram(self, runner):
        result = runner.invoke(cli, ["config", "audiograms", "--show", "N3"])
        assert result.exit_code == 0
        assert "1000,40" in result.output

    def test_show_unknown_audiogram(self, runner):
        result = runner.invoke(cli, ["config", "audiograms", "--show", "X1"])
        assert result.exit_code == 2

    def test_location(self, runner, monkeypatch, tmp_path):
        from hlcomp import cli as cli_module

        monkeypatch.setattr(cli_module, "get_data_dir", lambda: tmp_path)
        result = runner.invoke(cli, ["config", "location"])
        assert result.exit_code == 0
        assert "Directory Locations" in result.output
