"""
Curriculum training: multilingual NMT, two synthetic APE phases, fine-tuning.

Every stage trains from the best checkpoint of the previous one, early-stops
on its dev criterion (dev loss for NMT, dev TER afterwards) and writes its
own best checkpoint. Stage completion is recorded in ``cts_state.json`` so a
run can resume at any stage boundary; each stage reseeds from
``seed + stage index`` so a resumed run reproduces an uninterrupted one.
"""
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union
import json
import logging
import math

import numpy as np
import torch
from torch.optim.lr_scheduler import LambdaLR
from tqdm import tqdm

from ..corpus import Corpus, ParallelPair, split_by_domain, split_ids_disjoint
from ..exceptions import DataError, ModeError, TrainingError
from ..metrics import ter_corpus
from ..runlog import SCHEDULE, SKIP, TrainLog
from .adapters import freeze_except_adapters, has_adapters, insert_adapters
from .checkpoint import init_from_checkpoint, load_checkpoint, save_checkpoint
from .config import ModelConfig, Stage, TrainConfig, TrainMode
from .decoding import decode_corpus
from .losses import ape_loss, collect_task_gradients, compute_task_losses, ls_combine
from .model import (APE, NMT, QE_HEAD_PREFIXES, ApeModel, Batch, add_translation_encoder, attach_qe_heads,
                    collate_batch, count_parameters)
from .nash import nash_combine
from .vocab import Vocabulary

STAGE_ORDER = (Stage.NMT, Stage.SYNTHETIC_PHASE1, Stage.SYNTHETIC_PHASE2, Stage.FINETUNE)
STATE_FILE = "cts_state.json"
LOG_FILE = "train_log.jsonl"
SCHEDULE_NAME = "linear warmup, then constant"
MTL_MODES = (TrainMode.LS_MTL, TrainMode.NASH_MTL, TrainMode.DOMAIN_ADAPT)


@dataclass
class CtsData:
    """Everything one curriculum run trains and early-stops on."""
    parallel_train: List[ParallelPair]
    parallel_dev: List[ParallelPair]
    phase1: Corpus
    phase2: Corpus
    synthetic_dev: Corpus
    authentic_train: Corpus
    authentic_dev: Corpus
    domain_grouping: Optional[Dict[str, str]] = None
    default_group: Optional[str] = None
    evaluation: List[Corpus] = field(default_factory=list)


@dataclass
class CtsResult:
    checkpoint: Path
    log: TrainLog
    domain_checkpoints: Dict[str, Path] = field(default_factory=dict)


def warmup_constant(warmup_steps: int) -> Callable[[int], float]:
    return lambda step: min(1.0, (step + 1) / warmup_steps)


class CtsTrainer:
    """Runs the curriculum stages and every fine-tuning mode."""

    def __init__(self, vocab: Vocabulary, model_config: ModelConfig, config: TrainConfig,
                 work_dir: Union[str, Path], log: Optional[TrainLog] = None, progress: bool = False,
                 provenance: Optional[Dict[str, Any]] = None):
        self.vocab = vocab
        self.model_config = model_config
        self.config = config
        self.work_dir = Path(work_dir)
        self.work_dir.mkdir(parents=True, exist_ok=True)
        self.log = log if log is not None else TrainLog(self.work_dir / LOG_FILE)
        self.progress = progress
        self.provenance = dict(provenance or {})
        self.logger = logging.getLogger(self.__class__.__name__)

    # ------------------------------------------------------------------ helpers

    def _seed(self, stage: Stage) -> int:
        seed = self.config.seed + STAGE_ORDER.index(stage)
        torch.manual_seed(seed)
        return seed

    def _optimizer(self, model: ApeModel) -> Tuple[torch.optim.Optimizer, LambdaLR]:
        params = [p for p in model.parameters() if p.requires_grad]
        optimizer = torch.optim.Adam(params, lr=self.config.learning_rate, betas=tuple(self.config.adam_betas))
        return optimizer, LambdaLR(optimizer, warmup_constant(self.config.warmup_steps))

    def _meta(self, stage: str, mode: str, **extra: Any) -> Dict[str, Any]:
        return {"stage": stage, "mode": mode, "seed": self.config.seed,
                "ape_reduction": self.config.ape_reduction, **self.provenance, **extra}

    def _collate(self, sources, targets, translations=None, annotations=None) -> Batch:
        return collate_batch(self.vocab, sources, targets, translations, annotations,
                             max_len=self.model_config.max_len, strict=self.model_config.strict_length)

    def _corpus_batch(self, corpus: Corpus, indices: Sequence[int], with_annotations: bool = False) -> Batch:
        triplets = [corpus.triplets[i] for i in indices]
        annotations = [corpus.annotation(i) for i in indices] if with_annotations else None
        return self._collate([t.source for t in triplets], [t.post_edit for t in triplets],
                             [t.translation for t in triplets], annotations)

    def _pair_batch(self, pairs: Sequence[ParallelPair], indices: Sequence[int]) -> Batch:
        return self._collate([pairs[i].source for i in indices], [pairs[i].reference for i in indices])

    def new_model(self) -> ApeModel:
        return ApeModel(self.model_config)

    def _clip(self, model: ApeModel) -> None:
        if self.config.grad_clip:
            torch.nn.utils.clip_grad_norm_([p for p in model.parameters() if p.requires_grad],
                                           self.config.grad_clip)

    # ------------------------------------------------------------------ steps

    def _ape_step(self, model: ApeModel, batch: Batch, optimizer) -> Dict[str, float]:
        optimizer.zero_grad()
        logits = model(batch)
        loss = ape_loss(logits, batch.target_out, batch.target_mask, self.config.ape_reduction)
        loss.backward()
        self._clip(model)
        optimizer.step()
        return {"ape": float(loss.detach())}

    def _ls_step(self, model: ApeModel, batch: Batch, optimizer) -> Dict[str, float]:
        optimizer.zero_grad()
        losses = compute_task_losses(model, batch, self.config.ape_reduction)
        ls_combine(losses).backward()
        self._clip(model)
        optimizer.step()
        return losses.as_dict()

    def _nash_step(self, model: ApeModel, batch: Batch, optimizer, stage: str, step: int) -> Dict[str, float]:
        optimizer.zero_grad()
        grads = collect_task_gradients(model, batch, self.config.ape_reduction)
        update, solution = nash_combine(grads.matrix, self.config.nash_tol, self.config.nash_max_iters)
        named = dict(model.named_parameters())
        offset = 0
        for name in grads.shared_names:
            parameter = named[name]
            size = parameter.numel()
            parameter.grad = update[offset:offset + size].view_as(parameter).to(parameter.dtype).clone()
            offset += size
        for position, task in enumerate(grads.tasks):
            weight = float(solution.alpha[position])
            for name, grad in grads.specific[task].items():
                contribution = weight * grad
                parameter = named[name]
                parameter.grad = contribution if parameter.grad is None else parameter.grad + contribution
        self._clip(model)
        optimizer.step()
        self.log.solver(stage, step, **solution.as_record())
        return grads.losses.as_dict()

    # ------------------------------------------------------------------ stage loop

    def _fit(self, stage: Stage, model: ApeModel, n_items: int, make_batch: Callable[[Sequence[int]], Batch],
             step: Callable[[ApeModel, Batch, Any, int], Dict[str, float]],
             evaluate: Callable[[ApeModel], Dict[str, float]], criterion: str,
             out_dir: Path, meta: Dict[str, Any], label: Optional[str] = None) -> Path:
        """Train with early stopping; returns the best checkpoint path.

        ``label`` names the run in the log when one stage trains several models.
        """
        label = label or stage.value
        seed = self._seed(stage)
        optimizer, scheduler = self._optimizer(model)
        self.logger.info(f"{label}: training {count_parameters(model, trainable_only=True)} parameters")
        self.log.append(SCHEDULE, stage=label, schedule=SCHEDULE_NAME,
                        warmup_steps=self.config.warmup_steps, learning_rate=self.config.learning_rate,
                        betas=list(self.config.adam_betas))
        best_path = out_dir / "best.safetensors"
        best_value = math.inf
        since_best = 0
        global_step = 0
        size = self.config.batch_size

        epochs = tqdm(range(self.config.max_epochs), disable=not self.progress, desc=label)
        for epoch in epochs:
            model.train()
            order = np.random.default_rng([seed, epoch]).permutation(n_items)
            totals: Dict[str, float] = defaultdict(float)
            batches = 0
            for start in range(0, n_items, size):
                batch = make_batch([int(i) for i in order[start:start + size]])
                losses = step(model, batch, optimizer, global_step)
                scheduler.step()
                global_step += 1
                batches += 1
                if not all(math.isfinite(v) for v in losses.values()):
                    message = f"Non-finite loss in {label} at epoch {epoch}: {losses}"
                    self.logger.error(message)
                    raise TrainingError(message, stage=stage.value,
                                        checkpoint=str(best_path) if best_path.exists() else None)
                for task, value in losses.items():
                    totals[task] += value

            dev = evaluate(model)
            value = dev[criterion]
            improved = value < best_value
            if improved:
                best_value = value
                since_best = 0
                save_checkpoint(model, self.vocab, best_path, {**meta, "epoch": epoch, criterion: value})
            else:
                since_best += 1
            self.log.epoch(label, epoch,
                           train={task: total / max(batches, 1) for task, total in totals.items()},
                           dev=dev, criterion=criterion, best=best_value, improved=improved,
                           lr=scheduler.get_last_lr()[0])
            if since_best >= self.config.patience:
                self.logger.info(f"{label}: early stop after epoch {epoch} (best {criterion} {best_value:.4f})")
                break

        self.log.checkpoint(label, best_path, criterion=criterion, value=best_value)
        return best_path

    def _dev_loss_nmt(self, pairs: Sequence[ParallelPair]) -> Callable[[ApeModel], Dict[str, float]]:
        def evaluate(model: ApeModel) -> Dict[str, float]:
            model.eval()
            total, tokens = 0.0, 0
            with torch.no_grad():
                for start in range(0, len(pairs), self.config.batch_size):
                    batch = self._pair_batch(pairs, range(start, min(start + self.config.batch_size, len(pairs))))
                    logits = model(batch)
                    total += float(ape_loss(logits, batch.target_out, batch.target_mask, "sum"))
                    tokens += int(batch.target_mask.sum())
            return {"loss": total / max(tokens, 1)}
        return evaluate

    def _dev_ter(self, corpus: Corpus, with_qe: bool = False) -> Callable[[ApeModel], Dict[str, float]]:
        def evaluate(model: ApeModel) -> Dict[str, float]:
            hyps = decode_corpus(model, self.vocab, corpus, beam=1, max_len=self.config.max_decode_len,
                                 batch_size=self.config.batch_size)
            result = {"ter": ter_corpus(hyps, [t.post_edit for t in corpus])}
            if with_qe:
                model.eval()
                sums: Dict[str, float] = defaultdict(float)
                batches = 0
                with torch.no_grad():
                    for start in range(0, len(corpus), self.config.batch_size):
                        indices = range(start, min(start + self.config.batch_size, len(corpus)))
                        batch = self._corpus_batch(corpus, indices, with_annotations=True)
                        for task, value in compute_task_losses(model, batch, self.config.ape_reduction).as_dict().items():
                            sums[task] += value
                        batches += 1
                result.update({f"{task}_loss": value / max(batches, 1) for task, value in sums.items()})
            return result
        return evaluate

    # ------------------------------------------------------------------ stages

    def train_stage1_nmt(self, pairs: Sequence[ParallelPair], dev_pairs: Sequence[ParallelPair]) -> Path:
        """Train the single-encoder multilingual NMT model on merged parallel data."""
        if not pairs or not dev_pairs:
            raise DataError("Stage 1 needs non-empty training and dev parallel data")
        self._seed(Stage.NMT)
        model = self.new_model()
        return self._fit(
            Stage.NMT, model, len(pairs),
            lambda indices: self._pair_batch(pairs, indices),
            lambda m, b, opt, step: self._ape_step(m, b, opt),
            self._dev_loss_nmt(dev_pairs), "loss",
            self.work_dir / Stage.NMT.value, self._meta(Stage.NMT.value, NMT),
        )

    def train_synthetic_phase(self, checkpoint: Path, corpus: Corpus, dev: Corpus, stage: Stage) -> Path:
        """One synthetic phase; an NMT checkpoint gains its translation encoder first."""
        if len(corpus) == 0:
            self.logger.warning(f"{stage.value}: empty phase corpus, skipping")
            self.log.append(SKIP, stage=stage.value, reason="empty corpus")
            return checkpoint
        model, _, _ = load_checkpoint(checkpoint)
        self._seed(stage)
        if model.mode == NMT:
            model = add_translation_encoder(model)
        return self._fit(
            stage, model, len(corpus),
            lambda indices: self._corpus_batch(corpus, indices),
            lambda m, b, opt, step: self._ape_step(m, b, opt),
            self._dev_ter(dev), "ter",
            self.work_dir / stage.value, self._meta(stage.value, APE, translation_encoder_init="source-encoder copy"),
        )

    def train_stage2_synthetic(self, checkpoint: Path, phase1: Corpus, phase2: Corpus, dev: Corpus) -> Path:
        """Phase 1 (hard triplets) then phase 2 (easy triplets), APE loss only."""
        checkpoint = self.train_synthetic_phase(checkpoint, phase1, dev, Stage.SYNTHETIC_PHASE1)
        return self.train_synthetic_phase(checkpoint, phase2, dev, Stage.SYNTHETIC_PHASE2)

    def add_adapters(self, checkpoint: Path) -> Path:
        """Checkpoint copy with decoder adapters inserted."""
        model, _, meta = load_checkpoint(checkpoint)
        if not has_adapters(model):
            self._seed(Stage.FINETUNE)
            insert_adapters(model, self.config.adapter_dim)
        path = self.work_dir / "adapters-init.safetensors"
        save_checkpoint(model, self.vocab, path, {**meta, "adapters": self.config.adapter_dim})
        return path

    def _finetune_one(self, model: ApeModel, authentic: Corpus, dev: Corpus, mode: TrainMode,
                      out_dir: Path, label: Optional[str] = None, **meta: Any) -> Path:
        mtl = mode in MTL_MODES
        if mode in (TrainMode.LS_MTL, TrainMode.DOMAIN_ADAPT):
            # adapters take the APE gradient; the QE heads sit on frozen encoder states
            step = lambda m, b, opt, s: self._ls_step(m, b, opt)
        elif mode is TrainMode.NASH_MTL:
            step = lambda m, b, opt, s: self._nash_step(m, b, opt, Stage.FINETUNE.value, s)
        else:
            step = lambda m, b, opt, s: self._ape_step(m, b, opt)
        return self._fit(
            Stage.FINETUNE, model, len(authentic),
            lambda indices: self._corpus_batch(authentic, indices, with_annotations=mtl),
            step, self._dev_ter(dev, with_qe=mtl), "ter", out_dir,
            self._meta(Stage.FINETUNE.value, mode.value, **meta), label,
        )

    def train_stage3_finetune(self, checkpoint: Path, authentic: Corpus, dev: Corpus,
                              mode: Optional[TrainMode] = None,
                              grouping: Optional[Mapping[str, str]] = None,
                              default_group: Optional[str] = None) -> Union[Path, Dict[str, Path]]:
        """Fine-tune on authentic triplets.

        Returns one checkpoint, or one checkpoint per domain group in
        domain-adapt mode.
        """
        mode = TrainMode(mode or self.config.mode)
        if len(authentic) == 0:
            raise DataError("Fine-tuning needs authentic triplets")
        if mode in MTL_MODES and not authentic.has_annotations:
            raise DataError(f"{mode.value} needs QE-annotated authentic data")

        if mode is TrainMode.DOMAIN_ADAPT:
            if grouping is None:
                raise DataError("domain-adapt needs a domain grouping")
            loaded, _, _ = load_checkpoint(checkpoint)
            if not has_adapters(loaded):
                raise ModeError("domain-adapt needs a checkpoint with adapters")
            train_groups = split_by_domain(authentic, grouping, default_group)
            dev_groups = split_by_domain(dev, grouping, default_group)
            results: Dict[str, Path] = {}
            for group in sorted(train_groups):
                if len(train_groups[group]) == 0 or len(dev_groups[group]) == 0:
                    self.logger.warning(f"Domain group {group} has no train or dev triplets; skipping")
                    continue
                model, _, _ = load_checkpoint(checkpoint)
                self._seed(Stage.FINETUNE)
                attach_qe_heads(model)
                freeze_except_adapters(model, keep=QE_HEAD_PREFIXES)
                results[group] = self._finetune_one(
                    model, train_groups[group], dev_groups[group], mode,
                    self.work_dir / Stage.FINETUNE.value / group, f"{Stage.FINETUNE.value}/{group}", domain_group=group,
                )
            return results

        model, _, _ = load_checkpoint(checkpoint)
        self._seed(Stage.FINETUNE)
        if mode in (TrainMode.LS_MTL, TrainMode.NASH_MTL):
            attach_qe_heads(model)
        return self._finetune_one(model, authentic, dev, mode, self.work_dir / Stage.FINETUNE.value)

    # ------------------------------------------------------------------ orchestration

    def _load_state(self) -> Dict[str, Any]:
        path = self.work_dir / STATE_FILE
        if path.exists():
            with open(path, encoding="utf-8") as f:
                return json.load(f)
        return {"completed": {}, "domain_checkpoints": {}}

    def _save_state(self, state: Dict[str, Any]) -> None:
        with open(self.work_dir / STATE_FILE, "w", encoding="utf-8") as f:
            json.dump(state, f, indent=2)

    def run_cts(self, data: CtsData, resume: bool = False) -> CtsResult:
        """Stage 1, synthetic phases 1 and 2, then fine-tuning, with checkpoint hand-off."""
        split_ids_disjoint([data.phase1, data.phase2, data.authentic_train],
                           data.synthetic_dev, data.authentic_dev, *data.evaluation)
        state = self._load_state() if resume else {"completed": {}, "domain_checkpoints": {}}
        if not resume:
            self.log = TrainLog(None) if self.log.path is None else self._fresh_log()
        else:
            self._discard_incomplete(state)
        self._save_state(state)

        checkpoint: Optional[Path] = None
        for stage in STAGE_ORDER:
            if stage.value in state["completed"]:
                checkpoint = Path(state["completed"][stage.value])
                self.logger.info(f"Resuming: {stage.value} already complete ({checkpoint})")
                continue
            self.log.stage_transition(stage.value, mode=self.config.mode.value, seed=self.config.seed)
            if stage is Stage.NMT:
                checkpoint = self.train_stage1_nmt(data.parallel_train, data.parallel_dev)
            elif stage is Stage.SYNTHETIC_PHASE1:
                checkpoint = self.train_synthetic_phase(checkpoint, data.phase1, data.synthetic_dev, stage)
            elif stage is Stage.SYNTHETIC_PHASE2:
                checkpoint = self.train_synthetic_phase(checkpoint, data.phase2, data.synthetic_dev, stage)
            else:
                if self.config.mode is TrainMode.DOMAIN_ADAPT:
                    adapters = self.add_adapters(checkpoint)
                    groups = self.train_stage3_finetune(adapters, data.authentic_train, data.authentic_dev,
                                                        grouping=data.domain_grouping,
                                                        default_group=data.default_group)
                    state["domain_checkpoints"] = {group: str(path) for group, path in groups.items()}
                    checkpoint = adapters
                else:
                    checkpoint = self.train_stage3_finetune(checkpoint, data.authentic_train, data.authentic_dev)
            state["completed"][stage.value] = str(checkpoint)
            self._save_state(state)

        return CtsResult(Path(checkpoint), self.log,
                         {group: Path(path) for group, path in state.get("domain_checkpoints", {}).items()})

    def _fresh_log(self) -> TrainLog:
        if self.log.path.exists():
            self.log.path.unlink()
        return TrainLog(self.log.path)

    def _discard_incomplete(self, state: Dict[str, Any]) -> None:
        """Drop log records of stages that did not complete before the interruption."""
        completed = set(state["completed"])
        kept = [r for r in self.log.records() if str(r.get("stage", "")).split("/")[0] in completed]
        if self.log.path is not None and self.log.path.exists():
            self.log.path.unlink()
        log = TrainLog(self.log.path)
        for record in kept:
            kind = record.pop("type")
            record.pop("timestamp", None)
            log.append(kind, **record)
        self.log = log

    def transfer_init(self, donor_checkpoint: Union[str, Path], authentic: Corpus, dev: Corpus,
                      phases: Optional[Tuple[Corpus, Corpus, Corpus]] = None) -> Path:
        """Start from the other pair's APE checkpoint, then fine-tune on this pair.

        ``phases`` (phase 1, phase 2, synthetic dev) optionally runs the
        synthetic stage before fine-tuning.
        """
        donor_checkpoint = Path(donor_checkpoint)
        with torch.random.fork_rng(devices=[]):
            model = add_translation_encoder(self.new_model())
        init_from_checkpoint(model, donor_checkpoint, strict=True)
        self.provenance["donor"] = str(donor_checkpoint)
        path = self.work_dir / "transfer-init.safetensors"
        save_checkpoint(model, self.vocab, path, self._meta("transfer-init", APE))
        self.log.stage_transition("transfer-init", donor=str(donor_checkpoint))
        checkpoint = path
        if phases is not None:
            phase1, phase2, synthetic_dev = phases
            checkpoint = self.train_stage2_synthetic(checkpoint, phase1, phase2, synthetic_dev)
        self.log.stage_transition(Stage.FINETUNE.value, mode=self.config.mode.value, donor=str(donor_checkpoint))
        return self.train_stage3_finetune(checkpoint, authentic, dev)
