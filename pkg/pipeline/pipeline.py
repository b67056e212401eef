import json
import os
import shutil
from contextlib import contextmanager
from datetime import datetime
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd

from config.config import PROBLEM_DOMAINS, RUNS_DIR, RunConfig
from src.baselines import CoSimScorer, StopwordList, random_rank
from src.checkpoint import Checkpoint, load_checkpoint
from src.data_loader import DailyDialogLoader, LABELS_FILE, SPLIT_NAMES, read_canonical, read_pairs, write_pairs
from src.dialogue import DialoguePair, LabelSet, unique_dialogues
from src.embeddings import EmbeddingMatrix, Vocabulary, load_pretrained, read_vectors, tokenize
from src.evaluator import CoherenceScorer, evaluate_for_regime, format_inspection
from src.losses import TrainingRegime
from src.metrics import EvalReport, SeedSummary, pairwise_accuracy, report_table, summarize_seeds
from src.model import CoherenceModel
from src.perturbations import PairDatasetReport, build_pair_dataset
from src.trainer import TrainConfig, TrainResult, train
from utils.custom_exception import CustomException, UsageError
from utils.logger import attach_run_log, detach_run_log, get_logger

logger = get_logger(__name__)


class CoherencePipeline:
    """Runs one command end to end inside its own run directory."""

    def __init__(self, config: RunConfig, runs_dir: str = RUNS_DIR):
        self.config = config
        self.runs_dir = runs_dir

    def _run_dir(self, command: str, out: Optional[str]) -> str:
        if out:
            run_dir = out
        else:
            stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
            run_dir = os.path.join(self.runs_dir, f"{command}_{stamp}_seed{self.config.seed}")
        os.makedirs(run_dir, exist_ok=True)
        self.config.write(os.path.join(run_dir, "config.env"))
        return run_dir

    @contextmanager
    def _step(self, command: str, out: Optional[str]) -> Iterator[str]:
        run_dir = self._run_dir(command, out)
        handler = attach_run_log(run_dir)
        logger.info(f"Starting {command} in {run_dir}")
        try:
            yield run_dir
            logger.info(f"{command} finished successfully")
        except CustomException as e:
            logger.error(f"{command} failed: {e}")
            raise
        except Exception as e:
            logger.error(f"{command} failed: {str(e)}")
            raise CustomException(f"Error during {command}", e)
        finally:
            detach_run_log(handler)

    def prepare(self, raw_path: str, act_path: Optional[str] = None, out: Optional[str] = None) -> Dict[str, str]:
        """Canonical train/validation/test files and corpus statistics."""
        with self._step("prepare", out) as run_dir:
            loader = DailyDialogLoader(raw_path, run_dir, act_path=act_path, seed=self.config.seed,
                                       labels=self._configured_labels())
            return loader.load_and_process()

    def perturb(self, corpus_dir: str, domain: str, out: Optional[str] = None) -> dict:
        """Pair files for all three splits plus manifest.json with counts and skipped dialogues."""
        domain = domain.lower()
        if domain not in PROBLEM_DOMAINS:
            raise UsageError(f"Unknown problem domain '{domain}', expected one of {list(PROBLEM_DOMAINS)}")
        with self._step("perturb", out) as run_dir:
            manifest = {"problem_domain": domain, "seed": self.config.seed,
                        "per_dialogue": self.config.per_dialogue, "splits": {}}
            splits = [read_canonical(os.path.join(corpus_dir, f"{name}.jsonl"), name) for name in SPLIT_NAMES]
            everything = [d for split in splits for d in split.dialogues]
            for split in splits:
                name = split.name
                donors = None
                if domain == "ur" and len(split) < 2:
                    logger.warning(f"Split '{name}' has {len(split)} dialogue(s), drawing UR donors from the whole corpus")
                    donors = everything
                report = PairDatasetReport(domain)
                pairs = build_pair_dataset(split.dialogues, domain, self.config.per_dialogue,
                                           self.config.seed, report, donors)
                write_pairs(os.path.join(run_dir, f"{name}.jsonl"), pairs)
                manifest["splits"][name] = report.to_dict()
            labels_path = os.path.join(corpus_dir, LABELS_FILE)
            if os.path.exists(labels_path):
                shutil.copyfile(labels_path, os.path.join(run_dir, LABELS_FILE))
                manifest["labels"] = list(LabelSet.load(labels_path).names)
            with open(os.path.join(run_dir, "manifest.json"), "w", encoding="utf-8") as f:
                json.dump(manifest, f, indent=2, sort_keys=True)
            return manifest

    def _configured_labels(self) -> Optional[LabelSet]:
        return LabelSet.parse(self.config.da_labels) if self.config.da_labels else None

    def _label_set(self, pairs_dir: str, train_pairs: Sequence[DialoguePair]) -> LabelSet:
        """Configured labels, else the pair directory's labels.txt, else inferred from the training pairs."""
        dialogues = unique_dialogues(train_pairs)
        label_set = self._configured_labels()
        path = os.path.join(pairs_dir, LABELS_FILE)
        if label_set is None and os.path.exists(path):
            label_set = LabelSet.load(path)
        if label_set is None:
            label_set = LabelSet.infer(dialogues) or LabelSet.dailydialog()
            logger.warning(f"No {LABELS_FILE} in {pairs_dir}, using {label_set.size} labels {list(label_set.names)}")
        label_set.check(dialogues)
        return label_set

    def _build_model(self, train_pairs: Sequence[DialoguePair], seed: int, label_set: LabelSet) -> tuple:
        texts = [u for d in unique_dialogues(train_pairs) for u in d.utterances]
        vocab = Vocabulary.build(texts)
        rng = np.random.default_rng(seed)
        if self.config.embeddings:
            embedding = load_pretrained(self.config.embeddings, vocab, rng, expected_dim=self.config.embedding_dim,
                                        oov_scale=self.config.oov_scale, trainable=self.config.trainable_embeddings)
        else:
            logger.info("No pretrained embeddings configured, using random initialization")
            embedding = EmbeddingMatrix.random(vocab, self.config.embedding_dim, rng, scale=self.config.oov_scale,
                                               trainable=self.config.trainable_embeddings)
        model = CoherenceModel(embedding, label_set.names, utt_hidden=self.config.utt_hidden,
                               dial_hidden=self.config.dial_hidden, dropout_p=self.config.dropout_p,
                               init_gamma=self.config.init_gamma, dap_after_dropout=self.config.dap_after_dropout,
                               seed=seed)
        return model, vocab

    def train(self, pairs_dir: str, seeds: int = 1, out: Optional[str] = None) -> dict:
        """
        Train `seeds` models (seed, seed+1, ...) on <pairs_dir>/train.jsonl, selecting on
        validation.jsonl; when test.jsonl exists each best checkpoint is evaluated on it.
        """
        if seeds < 1:
            raise UsageError(f"--seeds must be at least 1, got {seeds}")
        train_pairs = self._read_nonempty(os.path.join(pairs_dir, "train.jsonl"))
        val_pairs = self._read_nonempty(os.path.join(pairs_dir, "validation.jsonl"))
        test_path = os.path.join(pairs_dir, "test.jsonl")
        test_pairs = read_pairs(test_path) if os.path.exists(test_path) else []
        domain = train_pairs[0].problem_domain
        label_set = self._label_set(pairs_dir, train_pairs)

        with self._step("train", out) as run_dir:
            results: List[dict] = []
            for offset in range(seeds):
                seed = self.config.seed + offset
                seed_dir = run_dir if seeds == 1 else os.path.join(run_dir, f"seed{seed}")
                result, test_report = self._train_one(seed, domain, label_set, train_pairs, val_pairs, test_pairs,
                                                        seed_dir)
                results.append({"seed": seed, "best_epoch": result.best_epoch, "best_metric": result.best_metric,
                                "checkpoint": result.checkpoint_path,
                                "test": test_report.to_dict() if test_report else None})
            summary = {"problem_domain": domain, "regime": self.config.regime, "runs": results}
            tested = [r["test"] for r in results if r["test"]]
            if len(tested) >= 2:
                stats = summarize_seeds([EvalReport(**t).metric for t in tested])
                summary["test_summary"] = {"mean": stats.mean, "std": stats.std, "formatted": stats.format()}
                logger.info(f"{self.config.regime} on {domain} over {len(tested)} seeds: {stats.format()}")
            with open(os.path.join(run_dir, "summary.json"), "w", encoding="utf-8") as f:
                json.dump(summary, f, indent=2, sort_keys=True)
            return summary

    def _train_one(self, seed: int, domain: str, label_set: LabelSet, train_pairs, val_pairs, test_pairs, out_dir: str):
        model, vocab = self._build_model(train_pairs, seed, label_set)
        config = TrainConfig.from_run_config(self.config)
        config.seed = seed
        recorded = self.config.to_dict()
        recorded.update(seed=seed, problem_domain=domain)
        result: TrainResult = train(config, train_pairs, val_pairs, model, vocab, out_dir, recorded)
        test_report = None
        if test_pairs:
            checkpoint = load_checkpoint(result.checkpoint_path)
            scorer = CoherenceScorer(checkpoint.build_model(), checkpoint.vocab, int(checkpoint.config["n_max"]))
            test_report = evaluate_for_regime(scorer, test_pairs, config.regime.selects_on_dap,
                                              domain, config.regime.value)
        return result, test_report

    @staticmethod
    def _read_nonempty(path: str) -> List[DialoguePair]:
        pairs = read_pairs(path)
        if not pairs:
            raise UsageError(f"Pair file is empty: {path}")
        return pairs

    @staticmethod
    def _open_checkpoint(path: str, vocab_path: Optional[str]) -> Checkpoint:
        checkpoint = load_checkpoint(path)
        if vocab_path is None:
            sibling = os.path.join(os.path.dirname(os.path.abspath(path)), "vocab.txt")
            vocab_path = sibling if os.path.exists(sibling) else None
        if vocab_path is not None:
            if not os.path.exists(vocab_path):
                raise UsageError(f"Vocabulary file not found: {vocab_path}")
            checkpoint.verify_vocab(Vocabulary.load(vocab_path))
        return checkpoint

    @staticmethod
    def _model_label(checkpoint: Checkpoint) -> str:
        trained_on = checkpoint.config.get("problem_domain")
        return f"{checkpoint.regime}/{trained_on}" if trained_on else checkpoint.regime

    def evaluate(self, checkpoints: Sequence[str], pair_files: Sequence[str], baselines: bool = False,
                 vocab_path: Optional[str] = None, out: Optional[str] = None) -> pd.DataFrame:
        """
        Every checkpoint on every pair file: pairwise accuracy for coherence regimes,
        macro-F1 on the original dialogues for DAP regimes. Several checkpoints with
        the same label (one per seed) are summarized as mean +- sample std.
        """
        if not checkpoints and not baselines:
            raise UsageError("eval needs at least one --checkpoint or --baselines")
        test_sets = {path: self._read_nonempty(path) for path in pair_files}
        if not test_sets:
            raise UsageError("eval needs at least one pair file")

        with self._step("eval", out) as run_dir:
            reports: List[EvalReport] = []
            for path in checkpoints:
                checkpoint = self._open_checkpoint(path, vocab_path)
                regime = TrainingRegime.parse(checkpoint.regime)
                scorer = CoherenceScorer(checkpoint.build_model(), checkpoint.vocab, int(checkpoint.config["n_max"]))
                for pairs in test_sets.values():
                    reports.append(evaluate_for_regime(scorer, pairs, regime.selects_on_dap,
                                                       pairs[0].problem_domain, self._model_label(checkpoint)))
            if baselines:
                reports.extend(self._baseline_reports(list(test_sets.values())))

            with open(os.path.join(run_dir, "reports.jsonl"), "w", encoding="utf-8") as f:
                for report in reports:
                    f.write(report.to_json() + "\n")
            table = report_table(reports, PROBLEM_DOMAINS)
            summaries = self._seed_summaries(reports)
            with open(os.path.join(run_dir, "report.txt"), "w", encoding="utf-8") as f:
                f.write(table.to_string() + "\n")
                for (model, domain), summary in summaries.items():
                    f.write(f"{model} {domain}: {summary.format()}\n")
            logger.info(f"Evaluation table:\n{table.to_string()}")
            return table

    @staticmethod
    def _seed_summaries(reports: Sequence[EvalReport]) -> Dict[tuple, SeedSummary]:
        grouped: Dict[tuple, List[float]] = {}
        for report in reports:
            grouped.setdefault((report.model, report.problem_domain), []).append(report.metric)
        return {key: summarize_seeds(values) for key, values in grouped.items() if len(values) >= 2}

    def _baseline_reports(self, test_sets: Sequence[List[DialoguePair]]) -> List[EvalReport]:
        reports = []
        rng = np.random.default_rng(self.config.seed)
        for pairs in test_sets:
            domain = pairs[0].problem_domain
            # a random ranking picks dial_a when the coin shows 0
            coins = [random_rank(p, rng) for p in pairs]
            reports.append(pairwise_accuracy(((1.0, 0.0, p.label) if c == 0 else (0.0, 1.0, p.label)
                                              for p, c in zip(pairs, coins)), domain, "Random"))
        if not self.config.embeddings:
            logger.warning("CoSim baseline skipped: no embeddings configured")
            return reports
        wanted = {t for pairs in test_sets for d in unique_dialogues(pairs) for u in d.utterances for t in tokenize(u)}
        cosim = CoSimScorer(read_vectors(self.config.embeddings, self.config.embedding_dim, wanted), StopwordList.load())
        cosim.coverage(d for pairs in test_sets for d in unique_dialogues(pairs))
        for pairs in test_sets:
            reports.append(pairwise_accuracy(((cosim(p.dial_a), cosim(p.dial_b), p.label) for p in pairs),
                                             pairs[0].problem_domain, "CoSim"))
        return reports

    def score(self, checkpoint_path: str, corpus_file: str, vocab_path: Optional[str] = None,
              out: Optional[str] = None) -> str:
        """{id, score} JSON lines for every dialogue of a canonical corpus file."""
        with self._step("score", out) as run_dir:
            checkpoint = self._open_checkpoint(checkpoint_path, vocab_path)
            scorer = CoherenceScorer(checkpoint.build_model(), checkpoint.vocab, int(checkpoint.config["n_max"]))
            dialogues = read_canonical(corpus_file).dialogues
            scores = scorer.score_dialogues(dialogues)
            path = os.path.join(run_dir, "scores.jsonl")
            with open(path, "w", encoding="utf-8") as f:
                for dial in dialogues:
                    f.write(json.dumps({"id": dial.id, "score": scores[dial.text_key]}) + "\n")
            logger.info(f"Scored {len(dialogues)} dialogues into {path}")
            return path

    def inspect(self, checkpoint_path: str, corpus_file: str, dialogue_id: Optional[str] = None,
                vocab_path: Optional[str] = None, out: Optional[str] = None) -> List[dict]:
        """Word and utterance attention records for one dialogue (or every dialogue of the file)."""
        dialogues = read_canonical(corpus_file).dialogues
        if dialogue_id is not None:
            dialogues = [d for d in dialogues if d.id == dialogue_id]
            if not dialogues:
                raise UsageError(f"Unknown dialogue id '{dialogue_id}' in {corpus_file}")
        with self._step("inspect", out) as run_dir:
            checkpoint = self._open_checkpoint(checkpoint_path, vocab_path)
            scorer = CoherenceScorer(checkpoint.build_model(), checkpoint.vocab, int(checkpoint.config["n_max"]))
            records: List[dict] = []
            rendered = []
            for dial in dialogues:
                score, dial_records = scorer.inspect(dial)
                records.extend(dict(r, score=score) for r in dial_records)
                rendered.append(f"{dial.id}\n{format_inspection(score, dial_records)}")
            with open(os.path.join(run_dir, "inspect.jsonl"), "w", encoding="utf-8") as f:
                for record in records:
                    f.write(json.dumps(record, ensure_ascii=False) + "\n")
            with open(os.path.join(run_dir, "inspect.txt"), "w", encoding="utf-8") as f:
                f.write("\n\n".join(rendered) + "\n")
            return records
