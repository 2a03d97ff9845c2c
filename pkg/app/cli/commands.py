from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from app.core.config import load_experiment_config
from app.core.exceptions import ContextError
from app.core.logging import get_logger
from app.models.forecaster import save_checkpoint
from app.schemas.context import ContextRecord, Scope
from app.schemas.experiment import ExperimentConfig
from app.services import experiment, report as reports
from app.services.context import read_jsonl, write_jsonl
from app.services.evaluation import evaluate
from app.services.ingestion import build_graph, ingest_csv, local_day_bounds
from app.services.plotting import plot_flows
from app.services.reduction import fit_pca, save_pca
from app.services.storage import dump_json, save_series
from app.services.synth import synth_generate, write_synth_dataset
from app.services.training import train as train_model

logger = get_logger(__name__)

CONTEXTS_FILE = "contexts.jsonl"


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        "seed": args.seed,
        "context": {"backend": args.backend, "embed_dim": args.embed_dim},
    }
    config = load_experiment_config(args.config, overrides)
    return experiment.effective_config(config, args.synth)


def _out(args: argparse.Namespace) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _inputs(args: argparse.Namespace, config: ExperimentConfig, *extra) -> list:
    paths = [args.config] if args.config else []
    if not args.synth:
        paths += [p for p in (config.data.series_dir, config.data.weather, config.data.events) if p]
    return paths + [p for p in extra if p]


def _manifest(args: argparse.Namespace, config: ExperimentConfig, artifacts, inputs=()) -> None:
    reports.write_manifest(_out(args), args.command, config.model_dump(mode="json"), config.seed,
                           inputs=inputs, artifacts=artifacts)


def ingest(args: argparse.Namespace) -> None:
    config = load_config(args)
    out = _out(args)
    first = config.data.period_start or config.split.train[0]
    last = config.data.period_end or config.split.test[1]
    period = local_day_bounds(first, last, config.data.timezone)
    graph = build_graph(experiment.grid_geometry(config), config.grid.adjacency)
    series, ingest_report = ingest_csv(args.trips, graph.geometry, period, config.data.timezone,
                                       chunk_size=args.chunk_size)
    series_dir = save_series(series, out / "series", graph)
    report_path = dump_json(out / "ingest-report.json", ingest_report.model_dump())
    _manifest(args, config, [series_dir / "values.bin", series_dir / "meta.json", report_path],
              inputs=[args.trips, *([args.config] if args.config else [])])


def embed(args: argparse.Namespace) -> None:
    config = load_config(args)
    out = _out(args)
    source = experiment.load_source(config, args.synth)
    by_split = experiment.context_records(config, source, [Scope.CITY, Scope.NODE])
    flat = [(name, r) for name, scoped in by_split.items() for records in scoped.values() for r in records]

    embedder = experiment.make_embedder(config)
    embedded = experiment.embed_records(embedder, [r for _, r in flat])
    contexts_path = write_jsonl(out / CONTEXTS_FILE,
                                ({**r.to_json_dict(), "split": name} for (name, _), r in zip(flat, embedded)))
    summary = {
        "backend": embedder.backend.identity,
        "model": embedder.backend.model,
        "dim": embedder.dim,
        "records": len(flat),
        "unique_texts": len({r.text for _, r in flat}),
        "cache_hits": embedder.hits,
        "cache_misses": embedder.misses,
        "hit_ratio": embedder.hit_ratio,
    }
    report_path = dump_json(out / "embed-report.json", summary)
    logger.info(f"Embedded {summary['unique_texts']} unique texts, cache hit ratio {embedder.hit_ratio:.2%}")
    _manifest(args, config, [contexts_path, report_path], inputs=_inputs(args, config))


def reduce(args: argparse.Namespace) -> None:
    config = load_config(args)
    out = _out(args)
    path = Path(args.contexts or config.data.contexts or out / CONTEXTS_FILE)
    train_vectors: dict[Scope, list[np.ndarray]] = {Scope.CITY: [], Scope.NODE: []}
    for _, obj in read_jsonl(path):
        if obj.get("split") != "train":
            continue
        record = ContextRecord.model_validate({k: v for k, v in obj.items() if k != "split"})
        if record.embedding is None:
            raise ContextError("context record without embedding; run `embed` first", details={"file": str(path)})
        train_vectors[record.scope].append(record.embedding)

    artifacts = []
    for scope, vectors in train_vectors.items():
        if not vectors:
            logger.warning(f"No training {scope.value} contexts in {path}; skipping")
            continue
        model = fit_pca(np.stack(vectors), config.context.variance_target)
        artifacts.append(save_pca(model, out / f"pca-{scope.value}.json"))
    _manifest(args, config, artifacts, inputs=[path, *([args.config] if args.config else [])])


def train(args: argparse.Namespace) -> None:
    config = load_config(args)
    out = _out(args)
    source = experiment.load_source(config, args.synth)
    scopes = config.augmentation.scopes if args.variant == "augmented" and config.augmentation.enabled else []
    data = experiment.prepare_data(config, source, scopes=scopes)
    result = train_model(config, data, scopes=scopes, log_path=out / "train-log.jsonl")
    checkpoint = save_checkpoint(result.model, out / "model.pt", config.seed)
    row = evaluate(result.model, data.test, data.designated_grid, variant=args.variant,
                   scopes="+".join(s.value for s in scopes))
    eval_path = dump_json(out / "train-eval.json", row.model_dump())
    _manifest(args, config, [checkpoint, out / "train-log.jsonl", eval_path], inputs=_inputs(args, config))


def compare(args: argparse.Namespace) -> None:
    config = load_config(args)
    out = _out(args)
    source = experiment.load_source(config, args.synth)
    result = experiment.run_comparison(config, source, models=args.models, scope_sweep=args.scope_sweep,
                                       log_dir=out / "logs")
    csv_path, json_path = reports.write_report(result, out)
    logs = sorted((out / "logs").glob("*.jsonl"))
    _manifest(args, config, [csv_path, json_path, *logs], inputs=_inputs(args, config))


def synth(args: argparse.Namespace) -> None:
    config = load_config(args)
    out = _out(args)
    paths = write_synth_dataset(synth_generate(config.synth), out / "synth")
    series_dir = paths["series"]
    _manifest(args, config, [series_dir / "values.bin", series_dir / "meta.json", paths["weather"], paths["events"]],
              inputs=[args.config] if args.config else [])


def plot(args: argparse.Namespace) -> None:
    config = load_config(args)
    out = _out(args)
    source = experiment.load_source(config, args.synth)
    png, csv = plot_flows(source.series, args.grids, args.days, args.output or out / "flows.png",
                          tz=config.data.timezone)
    _manifest(args, config, [png, csv], inputs=_inputs(args, config))


def report(args: argparse.Namespace) -> None:
    config = load_config(args)
    out = _out(args)
    merged = reports.merge_reports(args.inputs)
    csv_path, json_path = reports.write_report(merged, out)
    _manifest(args, config, [csv_path, json_path], inputs=args.inputs)
