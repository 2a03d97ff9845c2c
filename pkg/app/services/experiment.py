from __future__ import annotations

import hashlib
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np
import orjson
from pydantic import BaseModel, ConfigDict

from app.core.config import settings
from app.core.exceptions import ConfigError, ContextError
from app.core.logging import get_logger
from app.models.naive import hour_of_week
from app.schemas.context import ContextRecord, Scope
from app.schemas.dataset import PreparedData, WindowSet
from app.schemas.experiment import ExperimentConfig
from app.schemas.flows import FlowSeries, GraphSpec, GridGeometry
from app.schemas.reduction import PCAModel
from app.schemas.report import EvalReport
from app.services.context import ContextCatalog, load_day_contexts, load_events
from app.services.embedding import Embedder, EmbeddingCache, make_backend
from app.services.evaluation import evaluate
from app.services.ingestion import build_graph, split_series
from app.services.reduction import fit_pca, transform
from app.services.storage import load_series
from app.services.synth import synth_generate
from app.services.training import train
from app.services.windows import make_windows, stack_windows

logger = get_logger(__name__)

SCOPE_SWEEP: list[list[Scope]] = [[Scope.CITY], [Scope.NODE], [Scope.CITY, Scope.NODE]]


class DatasetSource(BaseModel):
    """Serie, grafo e catalogo dei contesti da cui parte un esperimento."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    series: FlowSeries
    graph: GraphSpec
    catalog: ContextCatalog | None = None
    origin: str = "files"


def effective_config(config: ExperimentConfig, synth: bool) -> ExperimentConfig:
    return config.for_synth() if synth else config


def node_grid_of(config: ExperimentConfig) -> int:
    node_grid = config.augmentation.node_grid
    return config.evaluation.designated_grid if node_grid is None else node_grid


def load_source(config: ExperimentConfig, synth: bool = False) -> DatasetSource:
    """Carica il dataset indicato dalla configurazione, oppure genera quello sintetico.

    Con synth=True la configurazione deve essere già quella restituita da effective_config.

    Raises:
        ConfigError: Nessuna serie indicata nella configurazione.
        FileNotFoundError: File di input mancanti.
    """
    if synth:
        ds = synth_generate(config.synth)
        catalog = ContextCatalog(ds.day_map(), ds.events, "UTC", config.context.holidays, node_grid_of(config))
        return DatasetSource(series=ds.series, graph=ds.graph, catalog=catalog, origin="synth")

    if not config.data.series_dir:
        raise ConfigError("data.series_dir is required (run `ingest` first, or pass --synth)")
    series, graph = load_series(config.data.series_dir)
    if graph is None:
        graph = build_graph(grid_geometry(config), config.grid.adjacency)
    catalog = None
    if config.data.weather:
        days = load_day_contexts(config.data.weather)
        events = load_events(config.data.events) if config.data.events else []
        catalog = ContextCatalog(days, events, config.data.timezone, config.context.holidays, node_grid_of(config))
    return DatasetSource(series=series, graph=graph, catalog=catalog)


def grid_geometry(config: ExperimentConfig) -> GridGeometry:
    g = config.grid
    return GridGeometry(origin_lat=g.origin_lat, origin_lng=g.origin_lng, cell_size_m=g.cell_size_m,
                        n_rows=g.n_rows, n_cols=g.n_cols)


def make_embedder(config: ExperimentConfig) -> Embedder:
    backend = make_backend(config.context.backend, config.context.embed_dim, config.context.backend_seed)
    cache = EmbeddingCache(config.context.cache_dir or settings.CACHE_DIR)
    return Embedder(backend, cache)


def embed_records(embedder: Embedder, records: Sequence[ContextRecord]) -> list[ContextRecord]:
    """Completa i record con il loro embedding (testi ripetuti inviati una sola volta)."""
    vectors = embedder.run_many([r.text for r in records])
    return [r.model_copy(update={"embedding": v}) for r, v in zip(records, vectors)]


def _window_set(series: FlowSeries, config: ExperimentConfig, tz: str, catalog: ContextCatalog | None,
                designated_grid: int) -> tuple[WindowSet, list[datetime]]:
    samples = make_windows(series, config.window)
    x, y = stack_windows(samples)
    anchors = [s.anchor_time for s in samples]
    event_day = np.array([catalog.is_event_day(a, designated_grid) if catalog else False for a in anchors],
                         dtype=bool)
    how = np.array([hour_of_week(a, tz) for a in anchors], dtype=np.int64)
    return WindowSet(x=x, y=y, hour_of_week=how, event_day=event_day, anchors=anchors), anchors


def prepare_data(config: ExperimentConfig, source: DatasetSource, embedder: Embedder | None = None,
                 scopes: Sequence[Scope] | None = None) -> PreparedData:
    """Finestre, statistiche di normalizzazione e contesti ridotti per train/val/test.

    Normalizzazione e PCA usano solo lo split di training.

    Args:
        config (ExperimentConfig): Configurazione effettiva.
        source (DatasetSource): Serie, grafo e catalogo.
        embedder (Embedder | None): Embedder da usare; se None se ne crea uno dalla configurazione.
        scopes (Sequence[Scope] | None): Contesti da preparare. Default: quelli della configurazione
            se l'augmentation è attiva, altrimenti nessuno.

    Raises:
        ConfigError: Cella designata o cella del nodo ausiliario fuori dalla griglia.
        ContextError: Contesti richiesti senza dati meteo/calendario.
    """
    n = source.series.n_grids
    designated = config.evaluation.designated_grid
    node_grid = node_grid_of(config)
    for label, g in (("designated_grid", designated), ("node_grid", node_grid)):
        if not 0 <= g < n:
            raise ConfigError(f"{label} outside the grid", details={label: g, "n": n})
    if source.graph.n_cells != n:
        raise ConfigError("graph and series disagree on the number of grids",
                          details={"graph": source.graph.n_cells, "series": n})
    if scopes is None:
        scopes = config.augmentation.scopes if config.augmentation.enabled else []
    scopes = sorted(set(scopes), key=lambda s: 0 if s is Scope.CITY else 1)
    if scopes and source.catalog is None:
        raise ContextError("context augmentation needs data.weather (and optionally data.events)")

    tz = config.data.timezone
    parts = split_series(source.series, config.split, tz)
    sets: dict[str, WindowSet] = {}
    anchors: dict[str, list[datetime]] = {}
    for name, part in zip(("train", "val", "test"), parts):
        sets[name], anchors[name] = _window_set(part, config, tz, source.catalog, designated)

    train_values = parts[0].values
    mean = train_values.mean(axis=(0, 2))
    std = train_values.std(axis=(0, 2))
    std = np.where(std > 0, std, 1.0)

    context_dims: dict[Scope, int] = {}
    pca_info: dict[str, dict] = {}
    if scopes:
        embedder = embedder or make_embedder(config)
        records = {name: source.catalog.records_for(anchors[name], scopes, node_grid) for name in sets}
        order = [(scope, name) for scope in scopes for name in sets]
        # tutti gli scope in un'unica chiamata: un solo event loop per il client remoto
        vectors = embedder.run_many([r.text for scope, name in order for r in records[name][scope]])
        embedded, start = {}, 0
        for scope, name in order:
            count = len(records[name][scope])
            embedded[scope, name] = np.stack(vectors[start:start + count])
            start += count
        for scope in scopes:
            by_split = {name: embedded[scope, name] for name in sets}
            pca: PCAModel = fit_pca(by_split["train"], config.context.variance_target)
            context_dims[scope] = pca.dim
            pca_info[scope.value] = {"dim": pca.dim, "input_dim": pca.input_dim,
                                     "retained_variance": float(np.sum(pca.explained_variance_ratio))}
            for name in sets:
                sets[name].contexts[scope.value] = transform(pca, by_split[name])
        logger.info(f"Context dimensions after reduction: { {k: v['dim'] for k, v in pca_info.items()} }")

    provenance = {
        "normalization_fit": "train",
        "pca_fit": "train",
        "early_stopping": "val",
        "split": config.split.model_dump(mode="json"),
        "samples": {name: ws.size for name, ws in sets.items()},
        "event_windows_test": int(sets["test"].event_day.sum()),
        "pca": pca_info,
        "embedding_backend": embedder.backend.identity if scopes and embedder else None,
        "dataset": source.origin,
    }
    return PreparedData(train=sets["train"], val=sets["val"], test=sets["test"],
                        adjacency=np.asarray(source.graph.adjacency), feature_mean=mean, feature_std=std,
                        train_series=parts[0], timezone=tz, designated_grid=designated, node_grid=node_grid,
                        context_dims=context_dims, provenance=provenance)


def config_hash(config: ExperimentConfig) -> str:
    payload = orjson.dumps(config.model_dump(mode="json"), option=orjson.OPT_SORT_KEYS)
    return hashlib.sha256(payload).hexdigest()


def _label(scopes: Sequence[Scope]) -> str:
    return "+".join(s.value for s in scopes)


def run_comparison(config: ExperimentConfig, source: DatasetSource, models: Sequence[str] | None = None,
                   scope_sweep: bool = False, embedder: Embedder | None = None,
                   log_dir: str | Path | None = None) -> EvalReport:
    """Confronto appaiato originale/aumentato con lo stesso seed e gli stessi iperparametri.

    Le varianti differiscono solo per i nodi ausiliari collegati. Con augmentation disattivata
    la variante "augmented" non riceve nodi ausiliari e coincide con l'originale.

    Args:
        config (ExperimentConfig): Configurazione effettiva.
        source (DatasetSource): Dataset.
        models (Sequence[str] | None): Architetture da confrontare. Default: config.model.architecture.
        scope_sweep (bool): Riporta le varianti city, node e city+node invece della sola configurata.
        embedder (Embedder | None): Embedder da riusare.
        log_dir (str | Path | None): Cartella per i log JSONL di addestramento.

    Returns:
        EvalReport: Una riga per (modello, variante), calcolata sul solo split di test.
    """
    if scope_sweep:
        variants = [(f"augmented:{_label(s)}", s) for s in SCOPE_SWEEP]
    else:
        configured = config.augmentation.scopes if config.augmentation.enabled else []
        variants = [("augmented", configured)]
    needed = sorted({s for _, scopes in variants for s in scopes}, key=lambda s: 0 if s is Scope.CITY else 1)
    data = prepare_data(config, source, embedder=embedder, scopes=needed)

    report = EvalReport(designated_grid=data.designated_grid, seed=config.seed, config_hash=config_hash(config),
                        provenance=data.provenance)
    for name in models or [config.model.architecture]:
        cfg = config.model_copy(update={"model": config.model.model_copy(update={"architecture": name})})
        for variant, scopes in [("original", []), *variants]:
            log_path = Path(log_dir) / f"train-log-{name}-{variant.replace(':', '-')}.jsonl" if log_dir else None
            result = train(cfg, data, scopes=scopes, log_path=log_path)
            report.rows.append(evaluate(result.model, data.test, data.designated_grid, variant=variant,
                                        scopes=_label(scopes)))
            report.training_curves[f"{name}/{variant}"] = result.history
    return report


def split_anchors(config: ExperimentConfig, source: DatasetSource) -> dict[str, list[datetime]]:
    """Istanti di previsione delle finestre di ciascuno split, come in prepare_data."""
    parts = split_series(source.series, config.split, config.data.timezone)
    return {name: [s.anchor_time for s in make_windows(part, config.window)]
            for name, part in zip(("train", "val", "test"), parts)}


def context_records(config: ExperimentConfig, source: DatasetSource, scopes: Sequence[Scope]
                    ) -> dict[str, dict[Scope, list[ContextRecord]]]:
    """ContextRecord (senza embedding) per split e scope.

    Raises:
        ContextError: Dataset senza catalogo dei contesti.
    """
    if source.catalog is None:
        raise ContextError("context composition needs data.weather (and optionally data.events)")
    return {name: source.catalog.records_for(anchors, scopes, node_grid_of(config))
            for name, anchors in split_anchors(config, source).items()}
