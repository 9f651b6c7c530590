"""
Tests for curriculum training on the toy corpora.
"""
import json

import pytest
import torch

from src.ai.adapters import adapter_parameter_names
from src.ai.checkpoint import load_checkpoint, save_checkpoint
from src.ai.config import Stage, TrainConfig, TrainMode
from src.ai.trainer import STAGE_ORDER, STATE_FILE, CtsData, CtsTrainer, warmup_constant
from src.corpus import partition_cts_phases
from src.exceptions import DataError, ModeError, TrainingError
from src.runlog import CHECKPOINT, EPOCH, SOLVER, STAGE
from src.toy import DEFAULT_GROUPING

from .conftest import tiny_config


def fast_config(**overrides):
    values = dict(batch_size=16, learning_rate=1e-3, warmup_steps=5, max_epochs=2, patience=1,
                  max_decode_len=16, seed=11)
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def pair(toy_data):
    return toy_data.pairs["en-hi"]


@pytest.fixture
def cts_data(pair):
    phase1, phase2 = partition_cts_phases(pair.synthetic)
    return CtsData(
        parallel_train=pair.parallel_train,
        parallel_dev=pair.parallel_dev,
        phase1=phase1,
        phase2=phase2,
        synthetic_dev=pair.synthetic_dev,
        authentic_train=pair.authentic_train,
        authentic_dev=pair.authentic_dev,
        domain_grouping=DEFAULT_GROUPING,
        evaluation=[pair.test],
    )


def make_trainer(vocab, work_dir, **overrides):
    return CtsTrainer(vocab, tiny_config(vocab), fast_config(**overrides), work_dir)


@pytest.fixture
def ape_checkpoint(ape_model, vocab, tmp_path):
    return save_checkpoint(ape_model, vocab, tmp_path / "ape.safetensors", {"stage": "synthetic-phase2"})


def dev_curve(log):
    return [(r["stage"], r["epoch"], r["criterion"], r["dev"][r["criterion"]]) for r in log.records(EPOCH)]


class TestSchedule:
    def test_warmup_then_constant(self):
        schedule = warmup_constant(4)
        assert [schedule(step) for step in range(6)] == [0.25, 0.5, 0.75, 1.0, 1.0, 1.0]


class TestStages:
    """Test cases for individual stages."""

    def test_nmt_early_stop(self, vocab, pair, tmp_path):
        """With a vanishing learning rate the dev loss never improves after the first epoch."""
        trainer = make_trainer(vocab, tmp_path, learning_rate=1e-30, max_epochs=20, patience=1)
        path = trainer.train_stage1_nmt(pair.parallel_train, pair.parallel_dev)
        epochs = trainer.log.records(EPOCH)
        assert [r["epoch"] for r in epochs] == [0, 1]
        assert epochs[0]["improved"] and not epochs[1]["improved"]
        model, _, meta = load_checkpoint(path)
        assert model.mode == "nmt"
        assert meta["epoch"] == 0

    def test_non_finite_loss_raises(self, vocab, pair, tmp_path):
        trainer = make_trainer(vocab, tmp_path)
        trainer._ape_step = lambda model, batch, optimizer: {"ape": float("nan")}
        with pytest.raises(TrainingError) as excinfo:
            trainer.train_stage1_nmt(pair.parallel_train, pair.parallel_dev)
        assert excinfo.value.stage == Stage.NMT.value
        assert excinfo.value.checkpoint is None

    def test_empty_phase_is_skipped(self, vocab, pair, ape_checkpoint, tmp_path):
        trainer = make_trainer(vocab, tmp_path / "run")
        empty = pair.synthetic.select([])
        assert trainer.train_synthetic_phase(ape_checkpoint, empty, pair.synthetic_dev,
                                             Stage.SYNTHETIC_PHASE1) == ape_checkpoint
        assert trainer.log.records("skip")[0]["stage"] == Stage.SYNTHETIC_PHASE1.value

    def test_mtl_needs_annotations(self, vocab, pair, ape_checkpoint, tmp_path):
        trainer = make_trainer(vocab, tmp_path / "run")
        plain = pair.synthetic_dev
        with pytest.raises(DataError):
            trainer.train_stage3_finetune(ape_checkpoint, plain, plain, mode=TrainMode.NASH_MTL)

    def test_domain_adapt_needs_adapters(self, vocab, pair, ape_checkpoint, tmp_path):
        trainer = make_trainer(vocab, tmp_path / "run")
        with pytest.raises(ModeError):
            trainer.train_stage3_finetune(ape_checkpoint, pair.authentic_train, pair.authentic_dev,
                                          mode=TrainMode.DOMAIN_ADAPT, grouping=DEFAULT_GROUPING)

    def test_nash_finetune_logs_solver(self, vocab, pair, ape_checkpoint, tmp_path):
        trainer = make_trainer(vocab, tmp_path / "run", max_epochs=1)
        path = trainer.train_stage3_finetune(ape_checkpoint, pair.authentic_train, pair.authentic_dev,
                                             mode=TrainMode.NASH_MTL)
        solver = trainer.log.records(SOLVER)
        assert len(solver) == 2
        assert all(len(r["alpha"]) == 3 for r in solver)
        epoch = trainer.log.records(EPOCH)[0]
        assert set(epoch["train"]) == {"ape", "sent", "word"}
        assert {"ter", "ape_loss", "sent_loss", "word_loss"} <= set(epoch["dev"])
        model, _, meta = load_checkpoint(path)
        assert model.has_qe_heads
        assert meta["mode"] == TrainMode.NASH_MTL.value

    def test_ls_finetune(self, vocab, pair, ape_checkpoint, tmp_path):
        trainer = make_trainer(vocab, tmp_path / "run", max_epochs=1)
        path = trainer.train_stage3_finetune(ape_checkpoint, pair.authentic_train, pair.authentic_dev,
                                             mode=TrainMode.LS_MTL)
        assert path.exists()
        assert not trainer.log.records(SOLVER)

    def test_domain_adapt_trains_adapters_only(self, vocab, pair, ape_checkpoint, tmp_path):
        trainer = make_trainer(vocab, tmp_path / "run", max_epochs=1)
        adapters = trainer.add_adapters(ape_checkpoint)
        groups = trainer.train_stage3_finetune(adapters, pair.authentic_train, pair.authentic_dev,
                                               mode=TrainMode.DOMAIN_ADAPT, grouping=DEFAULT_GROUPING)
        assert groups
        assert set(groups) <= {"news", "tourism", "general"}
        base, _, _ = load_checkpoint(adapters)
        base_state = base.state_dict()
        adapter_names = set(adapter_parameter_names(base))
        for group, path in groups.items():
            tuned, _, meta = load_checkpoint(path)
            assert meta["domain_group"] == group
            assert tuned.has_qe_heads
            tuned_state = tuned.state_dict()
            for name, value in base_state.items():
                if name not in adapter_names:
                    assert torch.equal(tuned_state[name], value), (group, name)
        labels = {r["stage"] for r in trainer.log.records(EPOCH)}
        assert labels == {f"finetune/{group}" for group in groups}

    def test_domain_adapt_trains_qe_tasks(self, vocab, pair, ape_checkpoint, tmp_path):
        trainer = make_trainer(vocab, tmp_path / "run", max_epochs=1)
        adapters = trainer.add_adapters(ape_checkpoint)
        trainer.train_stage3_finetune(adapters, pair.authentic_train, pair.authentic_dev,
                                      mode=TrainMode.DOMAIN_ADAPT, grouping=DEFAULT_GROUPING)
        epochs = trainer.log.records(EPOCH)
        assert epochs
        for record in epochs:
            assert set(record["train"]) == {"ape", "sent", "word"}
            assert record["train"]["word"] > 0.0
            assert {"ter", "sent_loss", "word_loss"} <= set(record["dev"])
        assert any(record["train"]["sent"] > 0.0 for record in epochs)

    def test_domain_adapt_needs_annotations(self, vocab, pair, ape_checkpoint, tmp_path):
        trainer = make_trainer(vocab, tmp_path / "run")
        adapters = trainer.add_adapters(ape_checkpoint)
        plain = pair.synthetic_dev
        with pytest.raises(DataError):
            trainer.train_stage3_finetune(adapters, plain, plain, mode=TrainMode.DOMAIN_ADAPT,
                                          grouping=DEFAULT_GROUPING)

    def test_transfer_init(self, vocab, pair, ape_checkpoint, tmp_path):
        trainer = make_trainer(vocab, tmp_path / "run", max_epochs=1)
        path = trainer.transfer_init(ape_checkpoint, pair.authentic_train, pair.authentic_dev)
        _, _, meta = load_checkpoint(path)
        assert meta["donor"] == str(ape_checkpoint)
        assert (tmp_path / "run" / "transfer-init.safetensors").exists()


@pytest.mark.slow
class TestCurriculum:
    """End-to-end curriculum runs."""

    def test_four_stages_in_order(self, vocab, cts_data, tmp_path):
        trainer = make_trainer(vocab, tmp_path / "run")
        result = trainer.run_cts(cts_data)
        transitions = [r["stage"] for r in result.log.records(STAGE)]
        assert transitions == [stage.value for stage in STAGE_ORDER]
        checkpoints = [r["stage"] for r in result.log.records(CHECKPOINT)]
        assert checkpoints == [stage.value for stage in STAGE_ORDER]
        model, _, meta = load_checkpoint(result.checkpoint)
        assert model.mode == "ape"
        assert meta["stage"] == Stage.FINETUNE.value
        state = json.loads((tmp_path / "run" / STATE_FILE).read_text(encoding="utf-8"))
        assert list(state["completed"]) == [stage.value for stage in STAGE_ORDER]

    def test_resume_reproduces_uninterrupted_run(self, vocab, cts_data, tmp_path):
        """Interrupting after the first synthetic phase and resuming gives the same curve."""
        reference = make_trainer(vocab, tmp_path / "a").run_cts(cts_data)

        interrupted = make_trainer(vocab, tmp_path / "b")
        interrupted.run_cts(cts_data)
        state_path = tmp_path / "b" / STATE_FILE
        state = json.loads(state_path.read_text(encoding="utf-8"))
        for stage in (Stage.SYNTHETIC_PHASE2, Stage.FINETUNE):
            del state["completed"][stage.value]
        state_path.write_text(json.dumps(state), encoding="utf-8")

        resumed = make_trainer(vocab, tmp_path / "b").run_cts(cts_data, resume=True)
        expected, actual = dev_curve(reference.log), dev_curve(resumed.log)
        assert [row[:3] for row in actual] == [row[:3] for row in expected]
        assert [row[3] for row in actual] == pytest.approx([row[3] for row in expected], rel=1e-5, abs=1e-6)

    def test_leaked_evaluation_data_rejected(self, vocab, cts_data, tmp_path):
        cts_data.evaluation = [cts_data.authentic_train.select([0])]
        with pytest.raises(DataError):
            make_trainer(vocab, tmp_path / "run").run_cts(cts_data)
