import csv

import pytest

from peqkd import cli, gbs
from peqkd.protocol import ConfigError
from peqkd.transcript_io import read_transcript


def run(args, tmp_path, sub="out"):
    out = tmp_path / sub
    return cli.main([*args, "--out", str(out)]), out


def summary(out):
    with open(out / "transcript.csv") as fh:
        return read_transcript(fh)["summary"][0]


class TestConfigFile:
    def test_parse(self):
        cfg = cli.parse_config("# comment\nchannel_params = 0.3, 0.7\n\nseed=5  # trailing\n")
        assert cfg == {"channel_params": "0.3, 0.7", "seed": "5"}

    @pytest.mark.parametrize("text", ["nonsense", "colour = blue"])
    def test_malformed(self, text):
        with pytest.raises(ConfigError):
            cli.parse_config(text)

    def test_flags_override_file(self, tmp_path):
        conf = tmp_path / "c.txt"
        conf.write_text("num_rounds = 50\nseed = 1\n")
        code, out = run(["run", "--config", str(conf), "--rounds", "80"], tmp_path)
        assert code == 0
        with open(out / "transcript.csv") as fh:
            assert len(read_transcript(fh)["run"]) == 80


class TestRun:
    def test_default_passive(self, tmp_path, capsys):
        code, out = run(["run", "--rounds", "2000"], tmp_path)
        assert code == 0
        assert float(summary(out)["qber"]) == 0
        assert "qber=0 " in capsys.readouterr().out

    def test_controlled_withheld(self, tmp_path):
        code, out = run(["run", "--rounds", "300", "--mode", "controlled", "--charlie-discloses", "false"], tmp_path)
        assert code == 0
        s = summary(out)
        assert s["aborted"] == "true" and s["key_length"] == "0"

    def test_repeater_withheld(self, tmp_path):
        code, out = run(["run", "--rounds", "300", "--mode", "repeater", "--withhold-station", "2"], tmp_path)
        assert code == 0 and summary(out)["aborted"] == "true"

    def test_byte_identical(self, tmp_path):
        run(["run", "--rounds", "500", "--seed", "9"], tmp_path, "a")
        run(["run", "--rounds", "500", "--seed", "9"], tmp_path, "b")
        for name in ("transcript.csv", "messages.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    @pytest.mark.parametrize(
        "args",
        [
            ["run", "--params", "0.5,abc"],
            ["run", "--params", "0.5"],
            ["run", "--mode", "repeater", "--withhold-station", "7"],
            ["run", "--charlie-discloses", "maybe"],
            ["attack", "--attack", "fake-source"],  # standard mode
            ["bogus"],
        ],
    )
    def test_config_errors(self, args, tmp_path):
        assert run(args, tmp_path)[0] == cli.EXIT_CONFIG

    def test_missing_config_file_is_io(self, tmp_path):
        assert run(["run", "--config", str(tmp_path / "nope")], tmp_path)[0] == cli.EXIT_IO

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert cli.main(["run", "--rounds", "10", "--out", str(blocker / "sub")]) == cli.EXIT_IO


class TestAttack:
    def test_intercept(self, tmp_path, capsys):
        code, out = run(["attack", "--rounds", "3000", "--attack", "intercept"], tmp_path)
        assert code == 0 and float(summary(out)["qber"]) > 0
        assert "eve_information=" in capsys.readouterr().out
        with open(out / "transcript.csv") as fh:
            assert len(read_transcript(fh)["eve"]) == 3000

    def test_fake_source(self, tmp_path):
        code, out = run(["attack", "--rounds", "3000", "--attack", "fake-source", "--mode", "controlled",
                         "--guess-pool", "0.5,0.9"], tmp_path)
        assert code == 0 and float(summary(out)["qber"]) > 0


class TestScan:
    def test_default(self, tmp_path, capsys):
        code, out = run(["scan"], tmp_path)
        assert code == 0
        printed = capsys.readouterr().out
        assert "(0.05, 0.95)" in printed and "(0.95, 0.05)" in printed
        with open(out / "scan.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["n1", "n2", "p_wrong", "rate", "F"] and len(rows) == 19 * 19 + 1

    def test_step_too_large(self, tmp_path):
        assert run(["scan", "--grid", "0.1,0.2,0.5"], tmp_path)[0] == cli.EXIT_CONFIG


class TestOracle:
    def test_branches_file(self, tmp_path, capsys):
        code, out = run(["oracle", "--attack", "intercept"], tmp_path)
        assert code == 0
        with open(out / "oracle.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert sum(float(r["probability"]) for r in rows) == pytest.approx(1, abs=1e-12)
        assert "qber=0.5" in capsys.readouterr().out


class TestVerify:
    def test_passes(self, tmp_path):
        code, out = run(["verify", "--trials", "1000"], tmp_path)
        assert code == 0
        with open(out / "report.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows and all(r["pass"] == "1" for r in rows)

    def test_threads_give_same_report(self, tmp_path):
        run(["verify", "--trials", "1000"], tmp_path, "one")
        run(["verify", "--trials", "1000", "--threads", "2"], tmp_path, "two")
        for name in ("report.csv", "report_mc_intercept.csv"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_injected_wrong_constant_fails(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(gbs, "p_suc", lambda n: 2 * n * n / (1 + n * n) ** 2 + 1e-3)
        code, _ = run(["verify", "--trials", "1000"], tmp_path)
        assert code == cli.EXIT_VERIFY
        assert "failed" in capsys.readouterr().err

    def test_too_few_trials(self, tmp_path):
        assert run(["verify", "--trials", "10"], tmp_path)[0] == cli.EXIT_CONFIG
