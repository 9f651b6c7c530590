"""
Tests for the command-line entry point.
"""
import json

import pytest
import yaml

from src.cli import EXIT_FAILURE, EXIT_OK, EXIT_ROWS_FAILED, build_parser, main


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def printed_json(capsys):
    return json.loads(capsys.readouterr().out)


class TestParser:

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_train_defaults(self):
        args = build_parser().parse_args(["train", "--corpora", "toy", "--out", "runs"])
        assert args.system == "w-langid"
        assert args.pairs == ["en-hi", "en-mr"]
        assert args.profile == "desk"
        assert args.stage is None

    def test_invalid_langid_mode(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["decode", "--ckpt", "a", "--corpus", "b", "--langid-mode", "some"])


class TestCommands:

    def test_evaluate(self, tmp_path, capsys):
        hyp = write_lines(tmp_path / "hyp.txt", ["a b c d", "e f g h"])
        ref = write_lines(tmp_path / "ref.txt", ["a b c d", "e f g h"])

        assert main(["evaluate", "--hyp", hyp, "--ref", ref]) == EXIT_OK
        assert printed_json(capsys) == {"TER": 0.0, "BLEU": 100.0}

    def test_evaluate_misaligned_files(self, tmp_path):
        hyp = write_lines(tmp_path / "hyp.txt", ["a b"])
        ref = write_lines(tmp_path / "ref.txt", ["a b", "c d"])
        assert main(["evaluate", "--hyp", hyp, "--ref", ref]) == EXIT_FAILURE

    def test_significance(self, tmp_path, capsys):
        hyp = write_lines(tmp_path / "hyp.txt", ["a b c", "d e f"])
        ref = write_lines(tmp_path / "ref.txt", ["a b c", "d e x"])

        code = main(["significance", "--hyp-a", hyp, "--hyp-b", hyp, "--ref", ref, "--trials", "1000"])
        assert code == EXIT_OK
        payload = printed_json(capsys)
        assert payload["p"] == 1.0
        assert payload["trials"] == 1000

    def test_significance_too_few_trials(self, tmp_path):
        hyp = write_lines(tmp_path / "hyp.txt", ["a b c"])
        ref = write_lines(tmp_path / "ref.txt", ["a b c"])
        assert main(["significance", "--hyp-a", hyp, "--hyp-b", hyp, "--ref", ref, "--trials", "10"]) == EXIT_FAILURE

    def test_build_toy(self, tmp_path, capsys):
        assert main(["build-toy", "--out", str(tmp_path / "toy")]) == EXIT_OK
        counts = printed_json(capsys)
        assert set(counts) == {"en-hi", "en-mr"}
        assert (tmp_path / "toy" / "toy.json").exists()

    def test_report_exit_codes(self, toy_root, tmp_path, capsys):
        ok = tmp_path / "ok.yaml"
        ok.write_text(yaml.safe_dump({"corpora": str(toy_root), "systems": ["do-nothing"],
                                      "pairs": ["en-hi"]}), encoding="utf-8")
        assert main(["report", "--grid", str(ok), "--out", str(tmp_path / "ok")]) == EXIT_OK
        assert (tmp_path / "ok" / "report.tsv").exists()

        broken = tmp_path / "broken.yaml"
        broken.write_text(yaml.safe_dump({"corpora": str(toy_root), "systems": ["do-nothing"],
                                          "pairs": ["en-hi", "en-xx"]}), encoding="utf-8")
        assert main(["report", "--grid", str(broken), "--out", str(tmp_path / "broken")]) == EXIT_ROWS_FAILED
        assert "failed" in capsys.readouterr().out

    def test_report_missing_grid(self, tmp_path):
        assert main(["report", "--grid", str(tmp_path / "none.yaml"), "--out", str(tmp_path)]) == EXIT_FAILURE

    def test_ablate_without_augmented_system(self, toy_root, tmp_path):
        grid = tmp_path / "grid.yaml"
        grid.write_text(yaml.safe_dump({"corpora": str(toy_root), "systems": ["do-nothing", "w-langid"]}),
                        encoding="utf-8")
        assert main(["ablate", "--grid", str(grid), "--sizes", "5", "--out", str(tmp_path / "out")]) == EXIT_FAILURE

    def test_invalid_settings(self, monkeypatch, tmp_path):
        monkeypatch.setenv("APE_SEED", "many")
        hyp = write_lines(tmp_path / "hyp.txt", ["a"])
        assert main(["evaluate", "--hyp", hyp, "--ref", hyp]) == EXIT_FAILURE
