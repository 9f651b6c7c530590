"""
Experiment harness: trains, decodes and scores every system of a grid.

A grid is a YAML document naming the systems, the corpora root (toy layout,
built on demand), the pairs, the seed and the training overrides. Each
(system, pair) row is isolated: a failure marks the row and the grid goes on.
Rows are scored with corpus TER and BLEU and tested for significance against
the declared baseline row of the same pair.
"""
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union
import json
import logging
import math

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator

from .augment import AugmentMode, augment_synthetic, quadruples_per_direction
from .corpus import (
    Corpus, LangIdMode, ParallelPair, Tokens, merge_multilingual, partition_cts_phases, prefix_langid,
    prefix_parallel,
)
from .exceptions import ConfigurationError, WorkbenchError
from .metrics import BLEU_SMOOTHING, MetricReport, evaluate_system
from .qe import DaScheme, normalize_da
from .settings import DEFAULT_LANG_IDS
from .significance import TEST_NAME, significance_test
from .toy import DEFAULT_GROUPING, MANIFEST, ToyData, build_toy_corpora, language_consistency, load_toy_corpora

logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.05
INSIGNIFICANT = "*"
FAILED = "failed"
COMPLETE = "complete"
REPORT_COLUMNS = ["system", "pair", "TER", "BLEU", "p", "marker"]
PREPROCESSING = {
    "tokenization": "NFC normalization, punctuation split, whitespace tokens",
    "case": "preserved",
    "ter": "greedy block shifts (max span 10, max distance 50), micro-averaged, x100",
    "bleu": f"corpus BLEU-4, {BLEU_SMOOTHING}",
    "significance": TEST_NAME,
    "significance_level": SIGNIFICANCE_LEVEL,
    "marker": f"'{INSIGNIFICANT}' when p >= {SIGNIFICANCE_LEVEL} against the baseline row",
}


@dataclass(frozen=True)
class SystemRecipe:
    """How one experiment row is trained and decoded."""
    label: str
    multilingual: bool = True
    langid: LangIdMode = LangIdMode.ALL
    augment: Optional[AugmentMode] = None
    mode: str = "single"
    trained: bool = True
    transfer: bool = False


SYSTEMS: Dict[str, SystemRecipe] = {
    "do-nothing": SystemRecipe("Do-Nothing", multilingual=False, langid=LangIdMode.NONE, trained=False),
    "baseline-ape": SystemRecipe("Bilingual APE", multilingual=False, langid=LangIdMode.NONE),
    "transfer": SystemRecipe("Transfer from other pair", multilingual=False, langid=LangIdMode.NONE,
                             transfer=True),
    "wo-langid": SystemRecipe("w/o-LangID", langid=LangIdMode.NONE),
    "only-auth-langid": SystemRecipe("Only-Authentic-w/-LangID", langid=LangIdMode.ONLY_AUTHENTIC),
    "w-langid": SystemRecipe("w/-LangID"),
    "w-langid+pairs": SystemRecipe("w/-LangID + Additional Pairs", augment=AugmentMode.PAIRS),
    "w-langid+candidates": SystemRecipe("w/-LangID + External Candidates", augment=AugmentMode.CANDIDATES),
    "mtl-ls": SystemRecipe("MTL-MAPE (LS-MTL)", mode="ls-mtl"),
    "mtl-nash": SystemRecipe("MTL-MAPE (Nash)", mode="nash-mtl"),
    "mtl-nash+dataaug": SystemRecipe("MTL-MAPE (Nash) + DataAug", augment=AugmentMode.PAIRS, mode="nash-mtl"),
    "domain-adapt": SystemRecipe("DomainAdapt", mode="domain-adapt"),
}


class ExperimentSpec(BaseModel):
    """One system of a grid, with everything needed to reproduce its rows."""
    system: str
    corpora: Path
    pairs: List[str] = Field(default_factory=lambda: ["en-hi", "en-mr"])
    seed: int = 17
    baseline: str = "baseline-ape"
    label: Optional[str] = None
    train: Dict[str, Any] = Field(default_factory=dict)
    model: Dict[str, Any] = Field(default_factory=dict)
    lang_ids: List[str] = Field(default_factory=lambda: list(DEFAULT_LANG_IDS))
    vocab_size: int = Field(default=2000, gt=0)
    beam: int = Field(default=5, ge=1)
    length_penalty: float = Field(default=1.0, ge=0.0)
    max_decode_len: int = Field(default=64, gt=0)
    augment_per_direction: int = Field(default=200, ge=0)
    external_langs: Dict[str, str] = Field(default_factory=lambda: {"hin_Deva": "mar_Deva",
                                                                     "mar_Deva": "hin_Deva"})
    da_scheme: DaScheme = DaScheme.ZSCORE
    grouping: Optional[Dict[str, str]] = None
    default_group: Optional[str] = None
    trials: int = Field(default=10000, ge=1000)

    @field_validator('system')
    @classmethod
    def validate_system(cls, v):
        """System must be one of the known experiment rows."""
        if v not in SYSTEMS:
            raise ValueError(f"Unknown system: {v}. Valid systems are: {', '.join(SYSTEMS)}")
        return v

    @property
    def recipe(self) -> SystemRecipe:
        return SYSTEMS[self.system]

    @property
    def row_label(self) -> str:
        return self.label or self.system


def load_grid(path: Union[str, Path]) -> List[ExperimentSpec]:
    """Read a grid YAML file into one ExperimentSpec per listed system.

    Every top-level key except ``systems`` is shared by all systems; a
    relative ``corpora`` path is resolved against the grid file.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            document = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigurationError(f"Cannot read grid {path}: {str(e)}")
    systems = document.pop("systems", None)
    if not systems:
        raise ConfigurationError(f"Grid {path} lists no systems")
    document.pop("name", None)
    corpora = Path(document.pop("corpora", "toy"))
    if not corpora.is_absolute():
        corpora = path.parent / corpora
    try:
        return [ExperimentSpec(system=system, corpora=corpora, **document) for system in systems]
    except ValidationError as e:
        raise ConfigurationError(f"Invalid grid {path}: {str(e)}")


def do_nothing(corpus: Corpus) -> List[Tokens]:
    """The machine translations, verbatim."""
    return [t.translation for t in corpus]


def significance_marker(p_value: float) -> str:
    if p_value is None or math.isnan(p_value):
        return ""
    return INSIGNIFICANT if p_value >= SIGNIFICANCE_LEVEL else ""


class ReportTable:
    """Experiment rows as a DataFrame plus the header describing how they were scored."""

    def __init__(self, frame: pd.DataFrame, header: Optional[Dict[str, Any]] = None):
        self.frame = frame
        self.header = header or {}

    @classmethod
    def from_rows(cls, rows: Sequence[Mapping[str, Any]], header: Optional[Dict[str, Any]] = None) -> 'ReportTable':
        frame = pd.DataFrame(list(rows), columns=REPORT_COLUMNS + ["status"])
        return cls(frame, header)

    @property
    def failed(self) -> pd.DataFrame:
        return self.frame[self.frame["status"] != COMPLETE]

    def row(self, system: str, pair: str) -> pd.Series:
        match = self.frame[(self.frame["system"] == system) & (self.frame["pair"] == pair)]
        if match.empty:
            raise KeyError(f"No row for {system} / {pair}")
        return match.iloc[0]

    def _formatted(self) -> pd.DataFrame:
        frame = self.frame.copy()
        for column, digits in (("TER", 2), ("BLEU", 2), ("p", 4)):
            frame[column] = frame[column].map(lambda v: "NA" if pd.isna(v) else f"{v:.{digits}f}")
        frame["marker"] = [
            FAILED if status != COMPLETE else marker
            for marker, status in zip(frame["marker"], frame["status"])
        ]
        return frame[REPORT_COLUMNS]

    def to_tsv(self) -> str:
        return self._formatted().to_csv(sep="\t", index=False, lineterminator="\n")

    def to_text(self) -> str:
        return self._formatted().to_string(index=False)

    def write(self, out_dir: Union[str, Path], stem: str = "report") -> Dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"tsv": out_dir / f"{stem}.tsv", "txt": out_dir / f"{stem}.txt", "header": out_dir / f"{stem}.json"}
        paths["tsv"].write_text(self.to_tsv(), encoding="utf-8")
        paths["txt"].write_text(self.to_text() + "\n", encoding="utf-8")
        with open(paths["header"], "w", encoding="utf-8") as f:
            json.dump(self.header, f, indent=2, default=str)
        return paths


@dataclass
class TrainedSystem:
    checkpoint: Optional[Path] = None
    domain_checkpoints: Dict[str, Path] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)


@dataclass
class RowResult:
    system: str
    pair: str
    report: Optional[MetricReport] = None
    status: str = COMPLETE
    error: Optional[str] = None
    details: Dict[str, Any] = field(default_factory=dict)
    ter: float = float("nan")
    bleu: float = float("nan")


class ExperimentHarness:
    """Trains and evaluates grid rows, caching data, vocabulary and trained systems."""

    def __init__(self, out_dir: Union[str, Path], progress: bool = False):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.progress = progress
        self.logger = logging.getLogger(self.__class__.__name__)
        self._data: Dict[Path, ToyData] = {}
        self._vocab: Dict[Tuple[Path, int], Any] = {}
        self._trained: Dict[Tuple, Union[TrainedSystem, Exception]] = {}

    # ------------------------------------------------------------------ data

    def data(self, spec: ExperimentSpec) -> ToyData:
        root = Path(spec.corpora)
        if root not in self._data:
            if not (root / MANIFEST).exists():
                self.logger.info(f"No corpora at {root}; building toy corpora with seed {spec.seed}")
                build_toy_corpora(root, spec.seed)
            self._data[root] = load_toy_corpora(root)
        return self._data[root]

    def vocabulary(self, spec: ExperimentSpec):
        from .ai.vocab import Vocabulary

        key = (Path(spec.corpora), spec.vocab_size)
        if key not in self._vocab:
            path = self.out_dir / f"vocab-{spec.vocab_size}.json"
            if path.exists():
                vocab = Vocabulary.from_json(path.read_text(encoding="utf-8"))
            else:
                data = self.data(spec)
                sentences: List[Tokens] = []
                for pair in data.pairs.values():
                    sentences.extend(p.source for p in pair.parallel_train)
                    sentences.extend(p.reference for p in pair.parallel_train)
                    for corpus in (pair.synthetic, pair.authentic_train):
                        for t in corpus:
                            sentences.extend((t.source, t.translation, t.post_edit))
                vocab = Vocabulary.train(sentences, spec.lang_ids, spec.vocab_size)
                path.write_text(vocab.to_json(), encoding="utf-8")
            self._vocab[key] = vocab
        return self._vocab[key]

    def _normalized(self, corpus: Corpus, scheme: DaScheme) -> Corpus:
        if corpus.annotations is None:
            return corpus
        annotations, record = normalize_da(corpus.annotations, scheme)
        return corpus.with_annotations(annotations, da_normalization=record)

    def cts_data(self, spec: ExperimentSpec, pairs: Sequence[str]):
        """Merge, augment, LangId-prefix and phase-split the corpora of ``pairs``."""
        from .ai.trainer import CtsData

        recipe = spec.recipe
        data = self.data(spec)
        selected = [data.pairs[name] for name in pairs]
        details: Dict[str, Any] = {"pairs": list(pairs), "langid_mode": recipe.langid.value}

        parallel: List[ParallelPair] = [p for pair in selected for p in pair.parallel_train]
        parallel = [parallel[i] for i in np.random.default_rng(spec.seed).permutation(len(parallel))]
        parallel_dev = [p for pair in selected for p in pair.parallel_dev]
        if recipe.langid is LangIdMode.ALL:
            parallel = prefix_parallel(parallel, spec.lang_ids)
            parallel_dev = prefix_parallel(parallel_dev, spec.lang_ids)

        synthetic = merge_multilingual([pair.synthetic for pair in selected], spec.seed)
        if recipe.augment is not None:
            quads = quadruples_per_direction(synthetic, data.translator(), spec.augment_per_direction,
                                             spec.seed, spec.external_langs)
            synthetic = augment_synthetic(synthetic, quads, recipe.augment)
            details["augmentation"] = {
                "mode": recipe.augment.value,
                "per_direction": dict(sorted(Counter(f"{q.external_lang}-{q.target_lang}" for q in quads).items())),
            }
        synthetic = prefix_langid(synthetic, recipe.langid, spec.lang_ids)
        phase1, phase2 = partition_cts_phases(synthetic)
        details["phases"] = {"phase1": len(phase1), "phase2": len(phase2),
                             "threshold": phase1.provenance.get("cts_threshold")}

        def merged(name: str, annotated: bool = False) -> Corpus:
            corpus = merge_multilingual([getattr(pair, name) for pair in selected], spec.seed)
            if annotated:
                corpus = self._normalized(corpus, spec.da_scheme)
            return prefix_langid(corpus, recipe.langid, spec.lang_ids)

        return CtsData(
            parallel_train=parallel,
            parallel_dev=parallel_dev,
            phase1=phase1,
            phase2=phase2,
            synthetic_dev=merged("synthetic_dev"),
            authentic_train=merged("authentic_train", annotated=True),
            authentic_dev=merged("authentic_dev", annotated=True),
            domain_grouping=self.grouping(spec, data),
            default_group=spec.default_group,
            evaluation=[prefix_langid(pair.test, recipe.langid, spec.lang_ids) for pair in selected],
        ), details

    def grouping(self, spec: ExperimentSpec, data: ToyData) -> Dict[str, str]:
        return dict(spec.grouping or data.manifest.get("grouping") or DEFAULT_GROUPING)

    # ------------------------------------------------------------------ training

    def make_trainer(self, spec: ExperimentSpec, work_dir: Path, config=None, **provenance: Any):
        """CtsTrainer for ``spec``; an explicit TrainConfig replaces the one built from the grid."""
        from .ai.config import ModelConfig, TrainConfig
        from .ai.trainer import CtsTrainer

        vocab = self.vocabulary(spec)
        if config is None:
            train = dict(spec.train)
            profile = train.pop("profile", "desk")
            config = TrainConfig.for_profile(profile, **{**train, "seed": spec.seed, "mode": spec.recipe.mode,
                                                         "beam": spec.beam})
        model_config = ModelConfig(vocab_size=len(vocab), lang_ids=spec.lang_ids, **spec.model)
        return CtsTrainer(vocab, model_config, config, work_dir, progress=self.progress,
                          provenance={"system": spec.system, **provenance})

    def _cache_key(self, spec: ExperimentSpec, pairs: Tuple[str, ...]) -> Tuple:
        recipe = spec.recipe
        size = spec.augment_per_direction if recipe.augment is not None else None
        return (spec.system, pairs, size, str(spec.corpora), spec.seed)

    def _work_dir(self, spec: ExperimentSpec, pairs: Tuple[str, ...]) -> Path:
        name = "+".join(pairs)
        if spec.recipe.augment is not None:
            name += f"-n{spec.augment_per_direction}"
        return self.out_dir / "runs" / spec.system / name

    def train(self, spec: ExperimentSpec, pair: str) -> TrainedSystem:
        """Train (or fetch from cache) the model serving ``pair`` for ``spec``."""
        recipe = spec.recipe
        pairs = tuple(spec.pairs) if recipe.multilingual else (pair,)
        key = self._cache_key(spec, pairs)
        if key in self._trained:
            cached = self._trained[key]
            if isinstance(cached, Exception):
                raise cached
            return cached
        try:
            trained = self._transfer(spec, pair) if recipe.transfer else self._train_cts(spec, pairs)
        except Exception as e:
            self._trained[key] = e
            raise
        self._trained[key] = trained
        return trained

    def _train_cts(self, spec: ExperimentSpec, pairs: Tuple[str, ...]) -> TrainedSystem:
        work_dir = self._work_dir(spec, pairs)
        trainer = self.make_trainer(spec, work_dir)
        cts, details = self.cts_data(spec, pairs)
        self.logger.info(f"Training {spec.row_label} on {'+'.join(pairs)}")
        result = trainer.run_cts(cts, resume=True)
        return TrainedSystem(result.checkpoint, result.domain_checkpoints, details)

    def _transfer(self, spec: ExperimentSpec, pair: str) -> TrainedSystem:
        others = [name for name in spec.pairs if name != pair] or [
            name for name in self.data(spec).pairs if name != pair]
        if not others:
            raise ConfigurationError(f"Transfer for {pair} needs another language pair")
        donor_spec = spec.model_copy(update={"system": "baseline-ape", "label": None})
        donor = self.train(donor_spec, others[0])
        work_dir = self._work_dir(spec, (pair,))
        trainer = self.make_trainer(spec, work_dir, donor_pair=others[0])
        cts, details = self.cts_data(spec, (pair,))
        state = work_dir / "transfer_done.json"
        if state.exists():
            checkpoint = Path(json.loads(state.read_text(encoding="utf-8"))["checkpoint"])
        else:
            checkpoint = trainer.transfer_init(donor.checkpoint, cts.authentic_train, cts.authentic_dev)
            state.write_text(json.dumps({"checkpoint": str(checkpoint)}), encoding="utf-8")
        details["donor"] = {"pair": others[0], "checkpoint": str(donor.checkpoint)}
        return TrainedSystem(checkpoint, {}, details)

    # ------------------------------------------------------------------ evaluation

    def _decode(self, spec: ExperimentSpec, checkpoint: Path, corpus: Corpus) -> List[Tokens]:
        from .ai.checkpoint import load_checkpoint
        from .ai.decoding import decode_corpus

        model, vocab, _ = load_checkpoint(checkpoint)
        return decode_corpus(model, vocab, corpus, beam=spec.beam, max_len=spec.max_decode_len,
                             length_penalty=spec.length_penalty, progress=self.progress)

    def evaluate_row(self, spec: ExperimentSpec, pair: str) -> RowResult:
        """Train if needed, decode the pair's test split and score it."""
        data = self.data(spec)
        if pair not in data.pairs:
            raise ConfigurationError(f"Unknown pair {pair}; corpora hold {', '.join(data.pairs)}")
        recipe = spec.recipe
        test = data.pairs[pair].test
        refs = [t.post_edit for t in test]
        row = RowResult(spec.row_label, pair)

        if not recipe.trained:
            hyps = do_nothing(test)
        else:
            trained = self.train(spec, pair)
            row.details.update(trained.details)
            inputs = prefix_langid(test, recipe.langid, spec.lang_ids)
            if recipe.mode == "domain-adapt":
                hyps = self._evaluate_domains(spec, data, trained, inputs, refs, row)
            else:
                hyps = self._decode(spec, trained.checkpoint, inputs)

        row.report = evaluate_system(hyps, refs)
        if "domain_scores" in row.details:
            scores = row.details["domain_scores"].values()
            row.ter = float(np.mean([s["TER"] for s in scores]))
            row.bleu = float(np.mean([s["BLEU"] for s in scores]))
        else:
            row.ter = row.report.ter_percent
            row.bleu = row.report.bleu
        row.details["language_consistency"] = language_consistency(
            hyps, [t.target_lang for t in test], data.lexicon)
        return row

    def _evaluate_domains(self, spec: ExperimentSpec, data: ToyData, trained: TrainedSystem,
                          inputs: Corpus, refs: Sequence[Tokens], row: RowResult) -> List[Tokens]:
        """Decode each domain group with its own checkpoint; scores are averaged over groups."""
        grouping = self.grouping(spec, data)
        members: Dict[str, List[int]] = {}
        for index, triplet in enumerate(inputs):
            group = grouping.get(triplet.domain, spec.default_group)
            if group is None:
                raise ConfigurationError(f"Domain {triplet.domain!r} is not covered by the grouping")
            members.setdefault(group, []).append(index)

        hyps: List[Optional[Tokens]] = [None] * len(inputs)
        scores: Dict[str, Dict[str, float]] = {}
        for group in sorted(members):
            checkpoint = trained.domain_checkpoints.get(group)
            if checkpoint is None:
                self.logger.warning(f"No adapter checkpoint for group {group}; using the shared model")
                checkpoint = trained.checkpoint
            indices = members[group]
            outputs = self._decode(spec, checkpoint, inputs.select(indices))
            for index, output in zip(indices, outputs):
                hyps[index] = output
            scores[group] = evaluate_system(outputs, [refs[i] for i in indices]).as_dict()
        row.details["domain_scores"] = scores
        return hyps

    # ------------------------------------------------------------------ grid

    def run(self, specs: Sequence[ExperimentSpec]) -> ReportTable:
        results: List[RowResult] = []
        for spec in specs:
            for pair in spec.pairs:
                try:
                    results.append(self.evaluate_row(spec, pair))
                except (WorkbenchError, ValueError, RuntimeError, KeyError) as e:
                    self.logger.error(f"Row {spec.row_label} / {pair} failed: {str(e)}")
                    results.append(RowResult(spec.row_label, pair, status=FAILED, error=str(e)))
        return self._table(specs, results)

    def _table(self, specs: Sequence[ExperimentSpec], results: Sequence[RowResult]) -> ReportTable:
        by_key = {(r.system, r.pair): r for r in results}
        rows, details = [], {}
        for spec in specs:
            trials, seed = spec.trials, spec.seed
            for pair in spec.pairs:
                result = by_key[(spec.row_label, pair)]
                p_value = float("nan")
                baseline = by_key.get((spec.baseline, pair))
                if (result.status == COMPLETE and baseline is not None and baseline is not result
                        and baseline.status == COMPLETE):
                    p_value = significance_test(result.report.sentence_edits, baseline.report.sentence_edits,
                                                trials=trials, seed=seed)
                rows.append({
                    "system": result.system, "pair": pair, "TER": result.ter, "BLEU": result.bleu,
                    "p": p_value, "marker": significance_marker(p_value), "status": result.status,
                })
                details[f"{result.system}|{pair}"] = {**result.details, "status": result.status,
                                                      **({"error": result.error} if result.error else {})}
                for group, score in sorted(result.details.get("domain_scores", {}).items()):
                    rows.append({"system": f"{result.system}/{group}", "pair": pair, "TER": score["TER"],
                                 "BLEU": score["BLEU"], "p": float("nan"), "marker": "", "status": COMPLETE})
        header = {
            "preprocessing": PREPROCESSING,
            "baselines": sorted({spec.baseline for spec in specs}),
            "seeds": sorted({spec.seed for spec in specs}),
            "beam": sorted({spec.beam for spec in specs}),
            "length_penalty": sorted({spec.length_penalty for spec in specs}),
            "rows": details,
        }
        return ReportTable.from_rows(rows, header)


def run_experiment_grid(specs: Sequence[ExperimentSpec], out_dir: Union[str, Path],
                        progress: bool = False) -> ReportTable:
    """Run every (system, pair) row and write ``report.tsv``, ``report.txt`` and ``report.json``."""
    table = ExperimentHarness(out_dir, progress).run(specs)
    table.write(out_dir)
    if not table.failed.empty:
        logger.warning(f"{len(table.failed)} grid rows failed")
    return table


def ablate_augmentation_size(sizes: Sequence[int], base_spec: ExperimentSpec, out_dir: Union[str, Path],
                             progress: bool = False) -> ReportTable:
    """One row per augmentation size (quadruples per added direction)."""
    if base_spec.recipe.augment is None:
        raise ConfigurationError(f"System {base_spec.system} uses no augmentation")
    specs = [
        base_spec.model_copy(update={"augment_per_direction": int(size), "label": f"{base_spec.system}@{size}"})
        for size in sizes
    ]
    table = ExperimentHarness(out_dir, progress).run(specs)
    table.write(out_dir, stem="ablation")
    return table
