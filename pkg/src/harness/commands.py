"""
Subcommand implementations: train, propagate, evaluate, sweep and verify

Each command takes a validated ExperimentConfig, raises KGRepError subclasses
on failure and records its run in the provenance database.
"""
import csv
import json
import os
import tempfile
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import structlog

from src.database import RunRecorder, track_run
from src.errors import CandidateDataError, CheckpointError, ConfigError
from src.evaluation import RankingProtocol, RankingReport, evaluate
from src.graph import (
    DatasetSplits,
    KnowledgeGraph,
    build_adjacency,
    filter_index,
    load_dataset,
    load_vocabulary,
    save_vocabulary,
)
from src.models import EmbeddingStore
from src.propagation import propagate
from src.training import TrainReport, train

from .checkpoint import check_vocabulary, load_checkpoint, read_header, save_checkpoint
from .config import ExperimentConfig
from .verify import VerifyReport, run_properties

logger = structlog.get_logger(__name__)

ENTITY_VOCAB_FILE = 'entities.tsv'
RELATION_VOCAB_FILE = 'relations.tsv'
TRAIN_LOG_FILE = 'train.jsonl'
SWEEP_FIELDS = ('checkpoint', 'mode', 'alpha', 'hops', 'mrr', 'hits1', 'hits3', 'hits10')


def _track(command: str, config: ExperimentConfig):
    return track_run(command, config.model_dump_json(), seed=config.seed,
                     enabled=config.provenance)


def _write_text_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def training_logger(path: Path):
    """structlog logger writing one JSON object per line to path"""
    handle = open(path, 'w', encoding='utf-8')
    log = structlog.wrap_logger(
        structlog.WriteLogger(handle),
        processors=[structlog.processors.JSONRenderer(sort_keys=True)],
    )
    return log, handle


def _load_vocabularies(checkpoint: Path):
    entity_file = checkpoint.parent / ENTITY_VOCAB_FILE
    relation_file = checkpoint.parent / RELATION_VOCAB_FILE
    if entity_file.exists() and relation_file.exists():
        return load_vocabulary(entity_file), load_vocabulary(relation_file)
    return None, None


def _load_inputs(config: ExperimentConfig, checkpoint: Path) -> Tuple[DatasetSplits, EmbeddingStore]:
    """Dataset (ids from the vocabularies saved next to checkpoint) and the store"""
    header = read_header(checkpoint)
    if config.model is not None and config.model != header.spec.family:
        raise ConfigError(
            f"{checkpoint} holds a {header.spec.family} model but --model is {config.model}")
    entity_vocab, relation_vocab = _load_vocabularies(checkpoint)
    mode = 'reuse' if entity_vocab is not None else 'build'
    splits = load_dataset(config.data, entity_vocab, relation_vocab, mode,
                          candidate_file=config.candidate_file)
    # header-only check, before the payload is read
    check_vocabulary(checkpoint, splits.entity_vocab, splits.relation_vocab)
    store = load_checkpoint(checkpoint, splits.entity_vocab, splits.relation_vocab)
    if store.num_entities != splits.train.num_entities or \
            store.num_relations != splits.train.num_relations:
        raise CheckpointError(
            f"{checkpoint}: table sizes ({store.num_entities}, {store.num_relations}) do not match "
            f"the dataset ({splits.train.num_entities}, {splits.train.num_relations})")
    return splits, store


def _protocol(config: ExperimentConfig, splits: DatasetSplits, test: KnowledgeGraph) -> RankingProtocol:
    if config.protocol == 'candidates':
        candidates = splits.candidates
        if candidates is None or len(candidates) < len(test):
            raise CandidateDataError("Missing candidate line",
                                     triplet_index=0 if candidates is None else len(candidates))
        return RankingProtocol.candidate_lists(candidates)
    if config.protocol == 'unfiltered':
        return RankingProtocol.unfiltered(test.num_entities, test.num_relations)
    return RankingProtocol.filtered(filter_index(splits.union()))


def _record_report(recorder: RunRecorder, report: RankingReport, **labels) -> None:
    for name, value in report.csv_row().items():
        if name != 'num_queries':
            recorder.metric(name, value, **labels)


def cmd_train(config: ExperimentConfig) -> TrainReport:
    """Train from scratch, writing checkpoints at the configured step fractions"""
    config.require_paths(data=True)
    spec = config.model_spec()
    if config.out is None:
        raise ConfigError("No output directory given (--out)")
    out = Path(config.out)
    with _track('train', config) as recorder:
        splits = load_dataset(config.data)
        out.mkdir(parents=True, exist_ok=True)
        save_vocabulary(splits.entity_vocab, out / ENTITY_VOCAB_FILE)
        save_vocabulary(splits.relation_vocab, out / RELATION_VOCAB_FILE)
        train_config = config.train_config()
        known = filter_index(splits.union()) if train_config.filtered_negatives else None

        def on_checkpoint(step: int, store: EmbeddingStore) -> None:
            save_checkpoint(store, out / f"checkpoint-step{step}.bin",
                            splits.entity_vocab, splits.relation_vocab)

        training_log, handle = training_logger(out / TRAIN_LOG_FILE)
        try:
            _, report = train(splits.train, spec, train_config, known=known,
                              on_checkpoint=on_checkpoint, training_log=training_log,
                              dtype=np.float32 if config.float_width == 4 else np.float64)
        finally:
            handle.close()
        _write_text_atomic(out / 'train_report.json', report.model_dump_json(indent=2) + '\n')
        recorder.output_path = str(out)
        recorder.metric('final_loss', report.epoch_losses[-1])
        recorder.metric('steps', report.steps)
        recorder.metric('seconds', sum(report.epoch_seconds))
    logger.info("Training finished", steps=report.steps, checkpoints=report.checkpoint_steps,
                out=str(out))
    return report


def propagated_name(config: ExperimentConfig) -> str:
    return f"propagated-{config.mode}-alpha{config.alpha:g}-hops{config.hops}.bin"


def cmd_propagate(config: ExperimentConfig) -> Path:
    """Propagate a checkpoint; the input file is never modified"""
    config.require_paths(data=True, checkpoint=True)
    if config.out is None:
        raise ConfigError("No output directory given (--out)")
    checkpoint = Path(config.checkpoint)
    out = Path(config.out)
    with _track('propagate', config) as recorder:
        splits, store = _load_inputs(config, checkpoint)
        adj = build_adjacency(splits.train)
        propagation = config.propagation_config()
        on_hop = None
        if propagation.evaluate_each_hop:
            test = splits.split(config.split)
            protocol = _protocol(config, splits, test)

            def on_hop(hop: int, current: EmbeddingStore, seconds: float) -> None:
                report = evaluate(current, test, protocol, config.tie, config.threads)
                logger.info("Hop evaluated", hop=hop, mrr=report.mrr, hits10=report.hits10,
                            seconds=seconds)
                _record_report(recorder, report, mode=config.mode, alpha=config.alpha, hops=hop)
                recorder.metric('hop_seconds', seconds, mode=config.mode, alpha=config.alpha,
                                hops=hop)

        started = time.perf_counter()
        result = propagate(store, adj, propagation, on_hop)
        seconds = time.perf_counter() - started
        out.mkdir(parents=True, exist_ok=True)
        save_vocabulary(splits.entity_vocab, out / ENTITY_VOCAB_FILE)
        save_vocabulary(splits.relation_vocab, out / RELATION_VOCAB_FILE)
        path = save_checkpoint(result, out / propagated_name(config),
                               splits.entity_vocab, splits.relation_vocab)
        recorder.output_path = str(path)
        recorder.metric('seconds', seconds, mode=config.mode, alpha=config.alpha, hops=config.hops)
    logger.info("Propagation finished", hops=config.hops, alpha=config.alpha, mode=config.mode,
                seconds=seconds, out=str(path))
    return path


def cmd_evaluate(config: ExperimentConfig) -> RankingReport:
    """Rank the chosen split and write the report JSON to --out (or stdout)"""
    config.require_paths(data=True, checkpoint=True)
    checkpoint = Path(config.checkpoint)
    with _track('evaluate', config) as recorder:
        splits, store = _load_inputs(config, checkpoint)
        test = splits.split(config.split)
        report = evaluate(store, test, _protocol(config, splits, test), config.tie, config.threads)
        text = json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + '\n'
        if config.out is not None:
            _write_text_atomic(Path(config.out), text)
            recorder.output_path = str(config.out)
        else:
            print(text, end='')
        _record_report(recorder, report, checkpoint=str(checkpoint))
    return report


def _cell_key(checkpoint: str, mode: str, alpha: float, hops: int) -> Tuple[str, str, str, str]:
    return checkpoint, mode, f"{alpha:g}", str(hops)


def _read_sweep(path: Path) -> Dict[Tuple[str, str, str, str], Dict[str, str]]:
    if not path.exists():
        return {}
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != SWEEP_FIELDS:
            raise ConfigError(f"{path} is not a sweep CSV (columns {reader.fieldnames})")
        return {(row['checkpoint'], row['mode'], row['alpha'], row['hops']): row for row in reader}


def _write_sweep(path: Path, rows: Iterable[Dict[str, str]]) -> None:
    lines = [','.join(SWEEP_FIELDS)]
    for row in rows:
        lines.append(','.join(row[field] for field in SWEEP_FIELDS))
    _write_text_atomic(path, '\n'.join(lines) + '\n')


def sweep_grid(config: ExperimentConfig) -> List[Tuple[str, str, float, int]]:
    """Cells in output order: checkpoint, mode, alpha, then hops"""
    return [(str(checkpoint), mode, alpha, hops)
            for checkpoint in config.all_checkpoints()
            for mode in config.sweep_modes
            for alpha in config.sweep_alphas
            for hops in config.sweep_hops]


def cmd_sweep(config: ExperimentConfig) -> Path:
    """Evaluate every (checkpoint, mode, alpha, hops) cell into a CSV

    Cells already present in the CSV are kept and not recomputed. A chain of
    hops for one (checkpoint, mode, alpha) is propagated once, evaluating at
    each requested hop count; hops=0 is the unpropagated table.
    """
    config.require_paths(data=True, checkpoint=True)
    path = Path(config.out) if config.out is not None else Path('sweep.csv')
    grid = sweep_grid(config)
    done = _read_sweep(path)
    rows: Dict[Tuple[str, str, str, str], Dict[str, str]] = dict(done)

    def flush() -> None:
        _write_sweep(path, [rows[_cell_key(*cell)] for cell in grid
                            if _cell_key(*cell) in rows])

    with _track('sweep', config) as recorder:
        recorder.output_path = str(path)
        for checkpoint in config.all_checkpoints():
            name = str(checkpoint)
            pending = [cell for cell in grid if cell[0] == name and _cell_key(*cell) not in rows]
            if not pending:
                continue
            splits, store = _load_inputs(config, Path(checkpoint))
            test = splits.split(config.split)
            protocol = _protocol(config, splits, test)
            adj = build_adjacency(splits.train)
            baseline: Optional[RankingReport] = None

            def record(mode: str, alpha: float, hops: int, report: RankingReport) -> None:
                row = {'checkpoint': name, 'mode': mode, 'alpha': f"{alpha:g}", 'hops': str(hops)}
                row.update({field: repr(float(getattr(report, field)))
                            for field in ('mrr', 'hits1', 'hits3', 'hits10')})
                rows[_cell_key(name, mode, alpha, hops)] = row
                _record_report(recorder, report, checkpoint=name, mode=mode, alpha=alpha,
                               hops=hops)

            for mode in config.sweep_modes:
                for alpha in config.sweep_alphas:
                    wanted = sorted({hops for cell_name, cell_mode, cell_alpha, hops in pending
                                     if cell_mode == mode and cell_alpha == alpha})
                    if not wanted:
                        continue
                    if wanted[0] == 0:
                        if baseline is None:
                            baseline = evaluate(store, test, protocol, config.tie, config.threads)
                        record(mode, alpha, 0, baseline)
                    remaining = set(wanted) - {0}
                    if remaining:
                        def on_hop(hop: int, current: EmbeddingStore, seconds: float) -> None:
                            if hop in remaining:
                                record(mode, alpha, hop,
                                       evaluate(current, test, protocol, config.tie,
                                                config.threads))
                            recorder.metric('hop_seconds', seconds, checkpoint=name, mode=mode,
                                            alpha=alpha, hops=hop)

                        propagate(store, adj,
                                  config.propagation_config(alpha=alpha, hops=max(remaining),
                                                            mode=mode),
                                  on_hop)
                    flush()
                    logger.info("Sweep chain finished", checkpoint=name, mode=mode, alpha=alpha,
                                hops=wanted)
        flush()
    return path


def cmd_verify(config: ExperimentConfig, properties: Optional[List[str]] = None,
               beta: float = 0.01) -> VerifyReport:
    """Run self-checks; the JSON report goes to --out (or stdout)"""
    with _track('verify', config) as recorder:
        report = run_properties(properties, beta=beta, seed=config.seed)
        text = report.model_dump_json(indent=2) + '\n'
        if config.out is not None:
            _write_text_atomic(Path(config.out), text)
            recorder.output_path = str(config.out)
        else:
            print(text, end='')
        for result in report.properties:
            recorder.metric(f"{result.name}.passed", float(result.passed))
            if result.value is not None:
                recorder.metric(result.name, result.value)
    return report
