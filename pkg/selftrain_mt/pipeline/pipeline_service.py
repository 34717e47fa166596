"""
Experiment orchestration: baseline training, one round of self-training with optional domain selection and
quality estimation, iterative self-training over a schedule of slices, and the full comparison grid.

Every stage writes its artifacts under `<output_dir>/<stage>/` and appends a record to the run manifest.
"""

from __future__ import annotations

import contextlib
import dataclasses
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from selftrain_mt.common import ConfigError, InputError, SelfTrainError, StageError, logger
from selftrain_mt.corpus.corpus_io import (
    SentencePair,
    corpus_stats,
    file_sha256,
    load_corpus,
    load_parallel,
    stats_table,
    write_corpus,
)
from selftrain_mt.evaluation.evaluate import EvalSet, dev_evaluator, evaluate_checkpoint
from selftrain_mt.nmt.nmt_checkpoint import Checkpoint, average_checkpoints, last_checkpoints
from selftrain_mt.nmt.nmt_config import ModelConfig
from selftrain_mt.nmt.nmt_decode import Hypothesis, translate_batch
from selftrain_mt.nmt.nmt_model import EncodedPair, ParameterSet
from selftrain_mt.nmt.nmt_train import TrainingRun, pretrain_finetune, train
from selftrain_mt.pipeline.pipeline_config import (
    METHOD_SL,
    METHOD_SL_DS,
    METHOD_SL_DS_QE,
    METHOD_SL_QE,
    ExperimentConfig,
    ScheduleEntry,
    resolve_sizes,
    uses_qe,
    uses_selection,
)
from selftrain_mt.pipeline.pipeline_manifest import MANIFEST_FILE, RunManifest, StageRecord
from selftrain_mt.qe.qe_confidence import ConfidenceEstimator, select_best, write_scores
from selftrain_mt.selection.fda_selection import SelectionRanking, extract_features, fraction_size, next_slice, select
from selftrain_mt.subword.bpe import MergeTable, apply_bpe, debpe, learn_bpe
from selftrain_mt.subword.vocab import Vocabulary, build_vocab

BASELINE = "baseline"
# kept-size denominators of the SL+DS+QE rows in the comparison grid
GRID_KEEP_FRACTIONS = (4, 8, 16)


def stage_dir_name(label: str) -> str:
    """'SL+DS+QE(125)' -> 'sl-ds-qe-125'"""
    return re.sub(r"[^a-z0-9.]+", "-", label.lower()).strip("-")


@dataclass(eq=False)
class PreparedData:
    merges: MergeTable
    vocab: Vocabulary
    model_config: ModelConfig
    parallel: List[SentencePair]
    parallel_ids: List[EncodedPair]
    mono: List[str]
    mono_ids: List[List[int]]
    test_sources: List[str]
    dev: EvalSet
    test: EvalSet
    hashes: Dict[str, str] = field(default_factory=dict)


@dataclass(eq=False)
class StageOutcome:
    record: StageRecord
    params: ParameterSet  # averaged model of the final training phase


@dataclass(eq=False)
class _RoundData:
    synthetic: List[EncodedPair]
    selected: int
    empty: int
    hashes: Dict[str, str]


class SelfTrainPipeline:
    def __init__(self, config: ExperimentConfig, output_dir: str | Path | None = None):
        self.config = config
        self.output_dir = Path(output_dir if output_dir is not None else config.output_dir)
        self.manifest = RunManifest(config=config.to_dict())
        self._data: Optional[PreparedData] = None
        self._baseline: Optional[StageOutcome] = None
        # (translator label, monolingual sentence index) -> hypothesis
        self._translations: Dict[Tuple[str, int], Hypothesis] = {}

    @contextlib.contextmanager
    def _stage(self, name: str) -> Iterator[None]:
        logger.info(f"Stage '{name}' started")
        started = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            error_msg = f"{type(e).__name__}: {e}"
            logger.error(f"Stage '{name}' failed: {error_msg}")
            raise StageError(name, error_msg) from e
        finally:
            self.manifest.timings[name] = round(time.perf_counter() - started, 3)
        logger.info(f"Stage '{name}' finished in {self.manifest.timings[name]:.1f}s")

    @property
    def data(self) -> PreparedData:
        if self._data is None:
            with self._stage("prepare"):
                self._data = self._prepare()
        return self._data

    def _prepare(self) -> PreparedData:
        cfg = self.config
        parallel = _non_empty_pairs(load_parallel(cfg.parallel_source, cfg.parallel_target), "parallel")
        mono = [line for line in load_corpus(cfg.mono_source) if line.split()]
        dev = _non_empty_pairs(load_parallel(cfg.dev_source, cfg.dev_target), "dev")
        test = _non_empty_pairs(load_parallel(cfg.test_source, cfg.test_target), "test")
        if not mono:
            raise InputError(f"Monolingual corpus {cfg.mono_source} has no non-empty sentences")

        stats_table(
            {
                "parallel (source)": corpus_stats([p.source for p in parallel]),
                "parallel (target)": corpus_stats([p.target for p in parallel]),
                "monolingual": corpus_stats(mono),
                "dev (source)": corpus_stats([p.source for p in dev]),
                "test (source)": corpus_stats([p.source for p in test]),
            }
        )

        # joint segmentation and one vocabulary shared by both languages
        merges = learn_bpe([p.source for p in parallel] + [p.target for p in parallel], cfg.num_merges)
        segmented = [" ".join(apply_bpe(p.source, merges)) for p in parallel]
        segmented += [" ".join(apply_bpe(p.target, merges)) for p in parallel]
        vocab = build_vocab(segmented, cfg.vocab_size)

        def encode(sentence: str) -> List[int]:
            return vocab.encode(apply_bpe(sentence, merges))

        prepare_dir = self.output_dir / "prepare"
        prepare_dir.mkdir(parents=True, exist_ok=True)
        merges.save(prepare_dir / "merges.txt")
        vocab.save(prepare_dir / "vocab.txt")

        hashes = {key: file_sha256(getattr(cfg, key)) for key in _INPUT_KEYS}
        hashes["merges"] = file_sha256(prepare_dir / "merges.txt")
        hashes["vocab"] = file_sha256(prepare_dir / "vocab.txt")
        self.manifest.data_hashes.update(hashes)

        return PreparedData(
            merges=merges,
            vocab=vocab,
            model_config=cfg.model_config(len(vocab), len(vocab)),
            parallel=parallel,
            parallel_ids=[(encode(p.source), encode(p.target)) for p in parallel],
            mono=mono,
            mono_ids=[encode(line) for line in mono],
            test_sources=[p.source for p in test],
            dev=EvalSet([encode(p.source) for p in dev], [p.target for p in dev], vocab),
            test=EvalSet([encode(p.source) for p in test], [p.target for p in test], vocab),
            hashes=hashes,
        )

    def _translate(self, translator_label: str, params: ParameterSet, indices: Sequence[int]) -> List[Hypothesis]:
        data = self.data
        missing = [i for i in indices if (translator_label, i) not in self._translations]
        if missing:
            hypotheses = translate_batch([data.mono_ids[i] for i in missing], params, workers=self.config.workers)
            for i, hypothesis in zip(missing, hypotheses):
                self._translations[(translator_label, i)] = hypothesis
        return [self._translations[(translator_label, i)] for i in indices]

    def _train_and_evaluate(
        self, label: str, synthetic: Optional[List[EncodedPair]]
    ) -> Tuple[ParameterSet, Dict[str, object]]:
        cfg = self.config
        data = self.data
        settings = cfg.train_settings()
        evaluator = dev_evaluator(data.dev, cfg.workers)
        stage_dir = self.output_dir / stage_dir_name(label)

        with self._stage(f"{label}/train"):
            run: TrainingRun
            if synthetic is None:
                run = train(data.parallel_ids, data.model_config, settings, cfg.seed, evaluator)
            else:
                run = pretrain_finetune(synthetic, data.parallel_ids, data.model_config, settings, cfg.seed, evaluator)
            self._stage_path(label, "dev_history.tsv").write_text(
                "step\tdev_bleu\n" + "".join(f"{step}\t{bleu!r}\n" for step, bleu in run.history), encoding="utf-8"
            )

        with self._stage(f"{label}/evaluate"):
            final_phase = "train" if synthetic is None else "finetune"
            final = last_checkpoints(run.phase_checkpoints(final_phase), settings.keep_last)
            averaged = average_checkpoints(final)
            averaged_steps = [c.step for c in final]
            checkpoint_files = [
                self._save_averaged(stage_dir / "averaged.ckpt", averaged, run.final_step, averaged_steps, final_phase)
            ]
            finetune_bleu = evaluate_checkpoint(averaged, data.test, beam=cfg.test_beam, workers=cfg.workers).score

            pretrain_bleu: Optional[float] = None
            if synthetic is not None:
                pretrain = last_checkpoints(run.phase_checkpoints("pretrain"), settings.keep_last)
                pretrain_params = average_checkpoints(pretrain)
                checkpoint_files.append(
                    self._save_averaged(
                        stage_dir / "pretrain-averaged.ckpt",
                        pretrain_params,
                        pretrain[-1].step,
                        [c.step for c in pretrain],
                        "pretrain",
                    )
                )
                pretrain_bleu = evaluate_checkpoint(
                    pretrain_params, data.test, beam=cfg.test_beam, workers=cfg.workers
                ).score

            best = run.best_checkpoint or final[-1]
            best_path = stage_dir / "best.ckpt"
            best.save(best_path)
            checkpoint_files.append(best_path)
            best_bleu = evaluate_checkpoint(best, data.test, beam=cfg.test_beam, workers=cfg.workers).score

        logger.info(
            f"[{label}] test BLEU {finetune_bleu:.2f} (averaged steps {averaged_steps[0]}-{averaged_steps[-1]}), "
            f"best checkpoint {best_bleu:.2f} at step {best.step}"
            + (f", pretrain-only {pretrain_bleu:.2f}" if pretrain_bleu is not None else "")
        )
        fields: Dict[str, object] = {
            "finetune_bleu": finetune_bleu,
            "best_bleu": best_bleu,
            "best_step": best.step,
            "pretrain_bleu": pretrain_bleu,
            "phase_boundary": run.phase_boundary,
            "checkpoints": [str(p.relative_to(self.output_dir)) for p in checkpoint_files],
            "averaged_steps": averaged_steps,
        }
        return averaged, fields

    @staticmethod
    def _save_averaged(path: Path, params: ParameterSet, step: int, steps: List[int], phase: str) -> Path:
        metadata = {"phase": phase, "averaged_steps": ",".join(str(s) for s in steps)}
        Checkpoint.from_parameters(params, step, metadata).save(path)
        return path

    def _record(
        self, label: str, method: str, params: ParameterSet, fields: Dict[str, object], **counts: object
    ) -> StageOutcome:
        data = self.data
        record = StageRecord(
            stage=label,
            method=method,
            parallel_size=len(data.parallel),
            mono_size=len(data.mono),
            **counts,  # type: ignore[arg-type]
            **fields,  # type: ignore[arg-type]
        )
        return StageOutcome(record=self.manifest.add(record), params=params)

    def run_baseline(self) -> Tuple[ParameterSet, StageRecord]:
        """Train on the authentic parallel data only; later stages translate with this model."""
        if self._baseline is None:
            params, fields = self._train_and_evaluate(BASELINE, None)
            self._baseline = self._record(BASELINE, BASELINE, params, fields, selected=0, kept=0, cumulative_kept=0)
        return self._baseline.params, self._baseline.record

    def _select(self, label: str, n: int) -> SelectionRanking:
        data = self.data
        table = extract_features(data.test_sources, self.config.nmax, self.config.decay)
        ranking = select(data.mono, table, n)
        ranking.write(self._stage_path(label, "ranking.tsv"))
        return ranking

    def _stage_path(self, label: str, name: str) -> Path:
        path = self.output_dir / stage_dir_name(label) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _round(
        self,
        label: str,
        method: str,
        indices: Sequence[int],
        keep: Optional[int],
        translator: ParameterSet,
        translator_label: str,
    ) -> _RoundData:
        """Translate the given monolingual sentences, drop empty outputs and optionally keep the best `keep`."""
        data = self.data
        with self._stage(f"{label}/translate"):
            hypotheses = self._translate(translator_label, translator, indices)
            candidates = [(i, h) for i, h in zip(indices, hypotheses) if h.content_ids]
            empty = len(indices) - len(candidates)
            if empty:
                logger.warning(f"[{label}] dropped {empty} empty translations")
            if not candidates:
                raise InputError(f"All {len(indices)} translations are empty")
            targets = [debpe(data.vocab.decode(h.content_ids)) for _, h in candidates]
            src_path = write_corpus(self._stage_path(label, "synthetic.src"), [data.mono[i] for i, _ in candidates])
            tgt_path = write_corpus(self._stage_path(label, "synthetic.tgt"), targets)

        kept_positions = list(range(len(candidates)))
        if uses_qe(method):
            if keep is None:
                raise ConfigError(f"Method {method} needs a kept size")
            with self._stage(f"{label}/qe"):
                estimator = ConfidenceEstimator(translator, workers=self.config.workers)
                scored = estimator.score(
                    [
                        (data.mono[i], text, (data.mono_ids[i], h.content_ids))
                        for (i, h), text in zip(candidates, targets)
                    ]
                )
                # report monolingual sentence indices rather than candidate positions
                write_scores(
                    [dataclasses.replace(s, index=candidates[s.index][0]) for s in scored],
                    self._stage_path(label, "scores.tsv"),
                )
                keep_count = min(keep, len(scored))
                if keep_count < keep:
                    logger.warning(f"[{label}] only {len(scored)} candidates left, keeping all instead of {keep}")
                kept_positions = [s.index for s in select_best(scored, keep_count)]

        kept_sources = [data.mono[candidates[p][0]] for p in kept_positions]
        kept_src = write_corpus(self._stage_path(label, "kept.src"), kept_sources)
        kept_tgt = write_corpus(self._stage_path(label, "kept.tgt"), [targets[p] for p in kept_positions])
        hashes = {
            "synthetic.src": file_sha256(src_path),
            "synthetic.tgt": file_sha256(tgt_path),
            "kept.src": file_sha256(kept_src),
            "kept.tgt": file_sha256(kept_tgt),
        }
        synthetic = [(data.mono_ids[candidates[p][0]], candidates[p][1].content_ids) for p in kept_positions]
        logger.info(f"[{label}] {len(indices)} selected, {len(synthetic)} synthetic pairs kept")
        return _RoundData(synthetic=synthetic, selected=len(indices), empty=empty, hashes=hashes)

    def run_selftrain(
        self,
        method: Optional[str] = None,
        n: Optional[int] = None,
        m: Optional[int] = None,
        label: Optional[str] = None,
    ) -> Tuple[ParameterSet, StageRecord]:
        """
        One round: translate monolingual sentences with the baseline, pre-train on the synthetic pairs and
        fine-tune on the authentic ones. SL uses every sentence, SL+DS the n nearest to the test domain,
        SL+QE the n most confident translations, SL+DS+QE the m most confident of the n nearest.
        """
        method = method or self.config.method
        label = label or method
        data = self.data
        default_n, default_m = resolve_sizes(self.config, len(data.mono))
        n = n or default_n
        m = m or default_m

        all_indices = list(range(len(data.mono)))
        keep: Optional[int] = None
        if method == METHOD_SL:
            indices = all_indices
        elif method == METHOD_SL_DS:
            indices = self._select(label, min(n, len(data.mono))).indices
        elif method == METHOD_SL_QE:
            indices, keep = all_indices, n
        elif method == METHOD_SL_DS_QE:
            if n <= m:
                raise ConfigError(f"Selection size n must exceed the kept size m (n={n}, m={m})")
            indices, keep = self._select(label, min(n, len(data.mono))).indices, m
        else:
            raise ConfigError(f"Unknown method '{method}'")

        baseline, _ = self.run_baseline()
        round_data = self._round(label, method, indices, keep, baseline, BASELINE)
        params, fields = self._train_and_evaluate(label, round_data.synthetic)
        outcome = self._record(
            label,
            method,
            params,
            fields,
            selected=round_data.selected,
            kept=len(round_data.synthetic),
            cumulative_kept=len(round_data.synthetic),
            empty_translations=round_data.empty,
            data_hashes=round_data.hashes,
        )
        return outcome.params, outcome.record

    def run_iterative(
        self, method: Optional[str] = None, schedule: Optional[Sequence[ScheduleEntry]] = None
    ) -> RunManifest:
        """
        Self-training over a schedule of (n_k, m_k) slices. Slice k continues the selection where slice k-1
        stopped (corpus order without selection), is translated by the model of iteration k-1 and, with QE,
        reduced to its m_k most confident pairs. Each iteration trains from scratch on all pairs kept so far.
        """
        method = method or self.config.method
        entries = list(schedule if schedule is not None else self.config.schedule_entries)
        if not entries:
            raise ConfigError("Iterative self-training needs a schedule (n1:m1,n2:m2,...)")
        data = self.data
        if sum(e.n for e in entries) > len(data.mono):
            raise InputError(f"Schedule needs {sum(e.n for e in entries)} sentences, corpus has {len(data.mono)}")

        translator, _ = self.run_baseline()
        translator_label = BASELINE
        ranking: Optional[SelectionRanking] = None
        offset = 0
        accumulated: List[EncodedPair] = []
        for iteration, entry in enumerate(entries, start=1):
            label = f"{method} iteration {iteration}"
            if uses_selection(method):
                if ranking is None:
                    table = extract_features(data.test_sources, self.config.nmax, self.config.decay)
                    ranking = select(data.mono, table, entry.n)
                else:
                    ranking = next_slice(ranking, data.mono, entry.n)
                ranking.write(self._stage_path(label, "ranking.tsv"), first_rank=offset + 1)
                indices = ranking.indices
            else:
                indices = list(range(offset, offset + entry.n))
            offset += entry.n

            round_data = self._round(
                label, method, indices, entry.m if uses_qe(method) else None, translator, translator_label
            )
            accumulated = accumulated + round_data.synthetic
            params, fields = self._train_and_evaluate(label, accumulated)
            outcome = self._record(
                label,
                method,
                params,
                fields,
                selected=round_data.selected,
                kept=len(round_data.synthetic),
                cumulative_kept=len(accumulated),
                iteration=iteration,
                empty_translations=round_data.empty,
                data_hashes=round_data.hashes,
            )
            translator, translator_label = outcome.params, label
        return self.manifest

    def run_grid(self) -> RunManifest:
        """Baseline, SL, SL+DS and SL+QE with n = B/3, then SL+DS+QE keeping B/4, B/8 and B/16."""
        size = len(self.data.mono)
        n = fraction_size(size, 1, 3)
        self.run_baseline()
        self.run_selftrain(METHOD_SL, label=METHOD_SL)
        self.run_selftrain(METHOD_SL_DS, n=n, label=METHOD_SL_DS)
        self.run_selftrain(METHOD_SL_QE, n=n, label=METHOD_SL_QE)
        for denominator in GRID_KEEP_FRACTIONS:
            m = fraction_size(size, 1, denominator)
            if m >= n:
                logger.warning(f"Skipping {METHOD_SL_DS_QE} with m={m}: not smaller than n={n}")
                continue
            self.run_selftrain(METHOD_SL_DS_QE, n=n, m=m, label=f"{METHOD_SL_DS_QE}({m})")
        return self.manifest

    def write_manifest(self) -> Path:
        path = self.manifest.write(self.output_dir / MANIFEST_FILE)
        logger.info(f"Manifest written to {path}")
        return path


_INPUT_KEYS = (
    "parallel_source",
    "parallel_target",
    "mono_source",
    "dev_source",
    "dev_target",
    "test_source",
    "test_target",
)


def _non_empty_pairs(pairs: List[SentencePair], name: str) -> List[SentencePair]:
    kept = [p for p in pairs if p.source.split() and p.target.split()]
    if len(kept) < len(pairs):
        logger.warning(f"Dropped {len(pairs) - len(kept)} {name} pairs with an empty side")
    if not kept:
        raise InputError(f"The {name} corpus has no usable sentence pairs")
    return kept


@contextlib.contextmanager
def _pipeline(config: ExperimentConfig) -> Iterator[SelfTrainPipeline]:
    """The manifest is written even when a stage fails, so partial runs stay auditable."""
    pipeline = SelfTrainPipeline(config)
    try:
        yield pipeline
    except SelfTrainError:
        pipeline.write_manifest()
        raise
    pipeline.write_manifest()


def run_baseline(config: ExperimentConfig) -> Tuple[ParameterSet, StageRecord]:
    with _pipeline(config) as pipeline:
        return pipeline.run_baseline()


def run_selftrain(config: ExperimentConfig) -> Tuple[ParameterSet, StageRecord]:
    with _pipeline(config) as pipeline:
        return pipeline.run_selftrain()


def run_iterative(config: ExperimentConfig) -> RunManifest:
    with _pipeline(config) as pipeline:
        return pipeline.run_iterative()


def run_grid(config: ExperimentConfig) -> RunManifest:
    with _pipeline(config) as pipeline:
        return pipeline.run_grid()
