"""
Tests for the experiment harness: grid loading, report tables and row isolation.
"""
import json
import math
from pathlib import Path

import pandas as pd
import pytest
import yaml

from src.exceptions import ConfigurationError
from src.harness import (
    COMPLETE, FAILED, INSIGNIFICANT, REPORT_COLUMNS, SYSTEMS, ExperimentHarness, ExperimentSpec, ReportTable,
    ablate_augmentation_size, do_nothing, load_grid, run_experiment_grid, significance_marker,
)
from src.metrics import evaluate_system
from src.toy import load_toy_corpora

SHIPPED_GRID = Path(__file__).resolve().parents[1] / "configs" / "toy_grid.yaml"

TINY_MODEL = {"embed_dim": 16, "ff_dim": 32, "encoder_layers": 1, "decoder_layers": 1, "heads": 2,
              "max_len": 64, "adapter_dim": 8, "dropout": 0.0}
FAST_TRAIN = {"batch_size": 16, "learning_rate": 1e-3, "warmup_steps": 5, "max_epochs": 1, "patience": 1,
              "max_decode_len": 16}


def write_grid(path, document):
    path.write_text(yaml.safe_dump(document), encoding="utf-8")
    return path


class TestLoadGrid:
    """Test cases for reading grid files."""

    def test_shared_keys_apply_to_every_system(self, tmp_path):
        grid = write_grid(tmp_path / "grid.yaml", {
            "name": "small", "corpora": "toy", "systems": ["do-nothing", "baseline-ape"],
            "pairs": ["en-hi"], "seed": 5, "beam": 2, "train": {"max_epochs": 3},
        })
        specs = load_grid(grid)

        assert [spec.system for spec in specs] == ["do-nothing", "baseline-ape"]
        for spec in specs:
            assert spec.pairs == ["en-hi"]
            assert spec.seed == 5
            assert spec.beam == 2
            assert spec.train == {"max_epochs": 3}

    def test_relative_corpora_resolved_against_grid(self, tmp_path):
        (tmp_path / "grids").mkdir()
        grid = write_grid(tmp_path / "grids" / "grid.yaml", {"corpora": "../data", "systems": ["do-nothing"]})
        assert load_grid(grid)[0].corpora == tmp_path / "grids" / "../data"

    def test_absolute_corpora_kept(self, tmp_path):
        grid = write_grid(tmp_path / "grid.yaml", {"corpora": str(tmp_path / "toy"), "systems": ["do-nothing"]})
        assert load_grid(grid)[0].corpora == tmp_path / "toy"

    def test_missing_systems(self, tmp_path):
        grid = write_grid(tmp_path / "grid.yaml", {"corpora": "toy"})
        with pytest.raises(ConfigurationError, match="no systems"):
            load_grid(grid)

    def test_unknown_system(self, tmp_path):
        grid = write_grid(tmp_path / "grid.yaml", {"systems": ["do-nothing", "oracle"]})
        with pytest.raises(ConfigurationError, match="Unknown system"):
            load_grid(grid)

    def test_too_few_trials(self, tmp_path):
        grid = write_grid(tmp_path / "grid.yaml", {"systems": ["do-nothing"], "trials": 10})
        with pytest.raises(ConfigurationError):
            load_grid(grid)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="Cannot read grid"):
            load_grid(tmp_path / "absent.yaml")


class TestExperimentSpec:
    """Test cases for ExperimentSpec defaults and recipes."""

    def test_defaults(self, tmp_path):
        spec = ExperimentSpec(system="w-langid", corpora=tmp_path)
        assert spec.pairs == ["en-hi", "en-mr"]
        assert spec.baseline == "baseline-ape"
        assert spec.trials == 10000
        assert spec.row_label == "w-langid"

    def test_label_overrides_row_label(self, tmp_path):
        assert ExperimentSpec(system="mtl-nash", corpora=tmp_path, label="nash").row_label == "nash"

    def test_every_system_has_a_recipe(self):
        assert len(SYSTEMS) == 12
        assert not SYSTEMS["do-nothing"].trained
        assert not SYSTEMS["baseline-ape"].multilingual
        assert SYSTEMS["transfer"].transfer
        assert SYSTEMS["mtl-nash+dataaug"].augment is not None
        assert SYSTEMS["domain-adapt"].mode == "domain-adapt"


class TestReportTable:
    """Test cases for report formatting."""

    @pytest.fixture
    def table(self):
        return ReportTable.from_rows([
            {"system": "baseline-ape", "pair": "en-hi", "TER": 20.0, "BLEU": 60.0, "p": float("nan"),
             "marker": "", "status": COMPLETE},
            {"system": "w-langid", "pair": "en-hi", "TER": 19.5, "BLEU": 61.25, "p": 0.2,
             "marker": INSIGNIFICANT, "status": COMPLETE},
            {"system": "mtl-nash", "pair": "en-hi", "TER": float("nan"), "BLEU": float("nan"),
             "p": float("nan"), "marker": "", "status": FAILED},
        ], header={"seeds": [17]})

    def test_significance_marker(self):
        assert significance_marker(0.2) == INSIGNIFICANT
        assert significance_marker(0.05) == INSIGNIFICANT
        assert significance_marker(0.01) == ""
        assert significance_marker(float("nan")) == ""

    def test_failed_rows(self, table):
        assert list(table.failed["system"]) == ["mtl-nash"]

    def test_row_lookup(self, table):
        assert table.row("w-langid", "en-hi")["TER"] == 19.5
        with pytest.raises(KeyError):
            table.row("w-langid", "en-mr")

    def test_tsv_formatting(self, table):
        lines = table.to_tsv().splitlines()
        assert lines[0].split("\t") == REPORT_COLUMNS
        assert lines[1].split("\t") == ["baseline-ape", "en-hi", "20.00", "60.00", "NA", ""]
        assert lines[2].split("\t") == ["w-langid", "en-hi", "19.50", "61.25", "0.2000", INSIGNIFICANT]
        assert lines[3].split("\t") == ["mtl-nash", "en-hi", "NA", "NA", "NA", FAILED]

    def test_write(self, table, tmp_path):
        paths = table.write(tmp_path, stem="grid")

        assert paths["tsv"].read_text(encoding="utf-8") == table.to_tsv()
        assert "w-langid" in paths["txt"].read_text(encoding="utf-8")
        assert json.loads(paths["header"].read_text(encoding="utf-8")) == {"seeds": [17]}


class TestHarnessRows:
    """Test cases for untrained rows and failure isolation."""

    def test_do_nothing_returns_translations(self, small_corpus):
        assert do_nothing(small_corpus) == [t.translation for t in small_corpus]

    def test_do_nothing_row_scores_the_machine_translation(self, toy_root, tmp_path):
        spec = ExperimentSpec(system="do-nothing", corpora=toy_root, pairs=["en-hi"])
        row = ExperimentHarness(tmp_path).evaluate_row(spec, "en-hi")

        test = load_toy_corpora(toy_root).pairs["en-hi"].test
        expected = evaluate_system([t.translation for t in test], [t.post_edit for t in test])
        assert row.status == COMPLETE
        assert row.ter == pytest.approx(expected.ter_percent)
        assert row.bleu == pytest.approx(expected.bleu)
        assert 0.0 <= row.details["language_consistency"] <= 1.0

    def test_failed_row_does_not_stop_the_grid(self, toy_root, tmp_path):
        specs = [
            ExperimentSpec(system="do-nothing", corpora=toy_root, pairs=["en-hi", "en-xx"]),
            ExperimentSpec(system="do-nothing", corpora=toy_root, pairs=["en-mr"], label="copy"),
        ]
        table = ExperimentHarness(tmp_path).run(specs)

        assert table.row("do-nothing", "en-hi")["status"] == COMPLETE
        assert table.row("do-nothing", "en-xx")["status"] == FAILED
        assert table.row("copy", "en-mr")["status"] == COMPLETE
        assert "en-xx" in table.header["rows"]["do-nothing|en-xx"]["error"]

    def test_p_value_against_same_pair_baseline(self, toy_root, tmp_path):
        specs = [
            ExperimentSpec(system="do-nothing", corpora=toy_root, pairs=["en-hi"]),
            ExperimentSpec(system="do-nothing", corpora=toy_root, pairs=["en-hi"], label="copy",
                           baseline="do-nothing", trials=1000),
        ]
        table = ExperimentHarness(tmp_path).run(specs)

        assert math.isnan(table.row("do-nothing", "en-hi")["p"])
        copy = table.row("copy", "en-hi")
        assert copy["p"] == 1.0
        assert copy["marker"] == INSIGNIFICANT

    def test_missing_baseline_gives_no_p_value(self, toy_root, tmp_path):
        spec = ExperimentSpec(system="do-nothing", corpora=toy_root, pairs=["en-mr"])
        table = ExperimentHarness(tmp_path).run([spec])
        assert pd.isna(table.row("do-nothing", "en-mr")["p"])

    def test_run_experiment_grid_writes_report(self, toy_root, tmp_path):
        spec = ExperimentSpec(system="do-nothing", corpora=toy_root, pairs=["en-hi"])
        run_experiment_grid([spec], tmp_path)

        assert (tmp_path / "report.tsv").exists()
        assert (tmp_path / "report.txt").exists()
        header = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert header["seeds"] == [17]
        assert "ter" in header["preprocessing"]

    def test_toy_corpora_built_on_demand(self, tmp_path):
        spec = ExperimentSpec(system="do-nothing", corpora=tmp_path / "toy", pairs=["en-hi"])
        ExperimentHarness(tmp_path / "out").data(spec)
        assert (tmp_path / "toy" / "toy.json").exists()

    def test_ablation_needs_augmentation(self, toy_root, tmp_path):
        spec = ExperimentSpec(system="w-langid", corpora=toy_root)
        with pytest.raises(ConfigurationError, match="no augmentation"):
            ablate_augmentation_size([10, 20], spec, tmp_path)


class TestCtsData:
    """Test cases for the data preparation behind trained rows."""

    def test_langid_and_augmentation(self, toy_root, tmp_path):
        spec = ExperimentSpec(system="w-langid+pairs", corpora=toy_root, augment_per_direction=5)
        data, details = ExperimentHarness(tmp_path).cts_data(spec, spec.pairs)

        assert details["augmentation"]["per_direction"] == {"hin_Deva-mar_Deva": 5, "mar_Deva-hin_Deva": 5}
        assert details["phases"]["phase1"] + details["phases"]["phase2"] == len(data.phase1) + len(data.phase2)
        for triplet in data.authentic_train:
            assert triplet.source[0] == triplet.target_lang
        for pair in data.parallel_train:
            assert pair.source[0] == pair.target_lang

    def test_only_authentic_langid_leaves_parallel_untouched(self, toy_root, tmp_path):
        spec = ExperimentSpec(system="only-auth-langid", corpora=toy_root)
        data, details = ExperimentHarness(tmp_path).cts_data(spec, spec.pairs)

        assert details["langid_mode"] == "only-authentic"
        assert not any(p.source[0] == p.target_lang for p in data.parallel_train)
        assert all(t.source[0] == t.target_lang for t in data.authentic_dev)

    def test_authentic_da_is_normalized(self, toy_root, tmp_path):
        spec = ExperimentSpec(system="mtl-nash", corpora=toy_root)
        data, _ = ExperimentHarness(tmp_path).cts_data(spec, spec.pairs)
        assert data.authentic_train.provenance["da_normalization"]["scheme"] == "zscore"


@pytest.mark.slow
@pytest.mark.integration
class TestSmallGrid:
    """End-to-end grid with a tiny model and a single epoch per stage."""

    def test_grid_rows_complete(self, toy_root, tmp_path):
        shared = dict(corpora=toy_root, model=TINY_MODEL, train=FAST_TRAIN, vocab_size=300, beam=1,
                      max_decode_len=16, trials=1000)
        specs = [
            ExperimentSpec(system="do-nothing", **shared),
            ExperimentSpec(system="baseline-ape", **shared),
            ExperimentSpec(system="mtl-nash", **shared),
            ExperimentSpec(system="domain-adapt", **shared),
        ]
        table = run_experiment_grid(specs, tmp_path)

        assert table.failed.empty, table.header["rows"]
        for system in ("do-nothing", "baseline-ape", "mtl-nash", "domain-adapt"):
            for pair in ("en-hi", "en-mr"):
                row = table.row(system, pair)
                assert row["TER"] >= 0.0
                assert 0.0 <= row["BLEU"] <= 100.0
        assert 0.0 <= table.row("mtl-nash", "en-hi")["p"] <= 1.0
        assert pd.isna(table.row("baseline-ape", "en-hi")["p"])
        assert any(system.startswith("domain-adapt/") for system in table.frame["system"])
        assert (tmp_path / "runs" / "mtl-nash" / "en-hi+en-mr").is_dir()

    def test_same_seed_grid_is_reproducible(self, toy_root, tmp_path):
        shared = dict(corpora=toy_root, model=TINY_MODEL, train=FAST_TRAIN, vocab_size=300, beam=1,
                      max_decode_len=16, trials=1000, baseline="do-nothing")
        specs = [ExperimentSpec(system=system, **shared) for system in ("do-nothing", "w-langid")]

        first = run_experiment_grid(specs, tmp_path / "first")
        second = run_experiment_grid(specs, tmp_path / "second")

        assert first.failed.empty
        pd.testing.assert_frame_equal(first.frame, second.frame, check_exact=True)
        assert (tmp_path / "first" / "report.tsv").read_bytes() == (tmp_path / "second" / "report.tsv").read_bytes()


@pytest.mark.slow
@pytest.mark.integration
class TestToyAcceptance:
    """The shipped toy grid settings on full-size toy corpora."""

    def test_langid_model_beats_do_nothing(self, tmp_path):
        grid = load_grid(SHIPPED_GRID)
        specs = [
            spec.model_copy(update={"corpora": tmp_path / "toy", "trials": 1000})
            for spec in grid if spec.system in ("do-nothing", "w-langid")
        ]
        assert [spec.system for spec in specs] == ["do-nothing", "w-langid"]
        assert all(spec.seed == 17 for spec in specs)

        table = run_experiment_grid(specs, tmp_path / "out")

        assert table.failed.empty, table.header["rows"]
        for pair in ("en-hi", "en-mr"):
            baseline = table.row("do-nothing", pair)["TER"]
            system = table.row("w-langid", pair)["TER"]
            assert baseline - system >= 10.0, (pair, baseline, system)
            assert table.header["rows"][f"w-langid|{pair}"]["language_consistency"] >= 0.95
