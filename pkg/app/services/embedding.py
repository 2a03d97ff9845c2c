from __future__ import annotations

import asyncio
import threading
import hashlib
from pathlib import Path
from typing import Protocol, Sequence

import httpx
import numpy as np
import orjson
from tenacity import AsyncRetrying, retry_if_exception, stop_after_attempt, wait_exponential

from app.core.config import Settings, settings
from app.core.exceptions import ConfigError, ContextError, DimensionDriftError, EmbeddingServiceError
from app.core.logging import get_logger
from app.services.http_client import HttpHeaders, HttpMethod, close_client, is_transient, send_request
from app.services.storage import atomic_write_bytes

logger = get_logger(__name__)


class EmbeddingBackend(Protocol):
    identity: str
    model: str

    async def embed_batch(self, texts: list[str]) -> list[np.ndarray]: ...

    async def aclose(self) -> None: ...


class OfflineEmbeddingBackend:
    """Backend deterministico senza rete: vettore unitario da un generatore inizializzato con l'hash del testo."""

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ConfigError("offline embedding dimension must be positive")
        self.dim = dim
        self.seed = seed
        self.identity = f"offline-v1:seed={seed}"
        self.model = f"offline-{dim}"

    def stable_hash(self, text: str) -> int:
        digest = hashlib.blake2b(f"{self.seed}\x00{text}".encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")

    def vector(self, text: str) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(self.stable_hash(text)))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    async def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        return [self.vector(t) for t in texts]

    async def aclose(self) -> None:
        pass


class RemoteEmbeddingBackend:
    """Client del servizio di embedding: POST {input, model} -> {data: [{embedding}]}."""

    def __init__(self, base_url: str, model: str, token: str = "", endpoint: str = "/v1/embeddings",
                 retries: int = 5, backoff_min: float = 1.0, backoff_max: float = 30.0,
                 client: httpx.AsyncClient | None = None):
        self.base_url = base_url
        self.endpoint = endpoint
        self.model = model
        self.identity = f"remote:{base_url.rstrip('/')}{endpoint}"
        self.retries = retries
        self.backoff_min = backoff_min
        self.backoff_max = backoff_max
        self.client = client
        self._headers = HttpHeaders(token=token)

    async def _post(self, texts: list[str]) -> dict:
        body, _ = await send_request(self.base_url, HttpMethod.POST, self.endpoint,
                                     payload={"input": texts, "model": self.model},
                                     headers=self._headers, backend=self.identity, client=self.client)
        if not isinstance(body, dict) or not isinstance(body.get("data"), list):
            raise EmbeddingServiceError("Malformed embedding response", backend=self.identity, transient=False)
        return body

    async def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        try:
            async for attempt in AsyncRetrying(
                stop=stop_after_attempt(self.retries),
                wait=wait_exponential(min=self.backoff_min, max=self.backoff_max),
                retry=retry_if_exception(is_transient),
                reraise=True,
            ):
                with attempt:
                    body = await self._post(texts)
        except EmbeddingServiceError as e:
            if is_transient(e):
                raise EmbeddingServiceError(f"Embedding service unreachable after {self.retries} attempts",
                                            backend=self.identity, status_code=e.status_code)
            raise

        items = body["data"]
        if len(items) != len(texts):
            raise EmbeddingServiceError("Embedding count does not match input count", backend=self.identity,
                                        details={"sent": len(texts), "received": len(items)})
        if all("index" in item for item in items):
            items = sorted(items, key=lambda item: item["index"])
        return [np.asarray(item["embedding"], dtype=np.float64) for item in items]

    async def aclose(self) -> None:
        """Chiude il client condiviso; un client passato dal chiamante resta a suo carico."""
        if self.client is None:
            await close_client()


def make_backend(kind: str, embed_dim: int = 64, backend_seed: int = 0,
                 app_settings: Settings = settings) -> EmbeddingBackend:
    if kind == "offline":
        return OfflineEmbeddingBackend(dim=embed_dim, seed=backend_seed)
    if kind == "remote":
        if not app_settings.EMBEDDING_API_TOKEN:
            logger.warning("FLOWCTX_EMBEDDING_API_TOKEN is empty; remote requests will be unauthenticated")
        return RemoteEmbeddingBackend(base_url=app_settings.EMBEDDING_SERVICE_URL,
                                      endpoint=app_settings.EMBEDDING_ENDPOINT,
                                      model=app_settings.EMBEDDING_MODEL,
                                      token=app_settings.EMBEDDING_API_TOKEN,
                                      retries=app_settings.EMBEDDING_RETRIES)
    raise ConfigError(f"unknown embedding backend {kind!r}")


class EmbeddingCache:
    """Cache su disco indirizzata per contenuto: un file {sha256}.json per testo.

    Letture concorrenti senza lock; le scritture sono serializzate e atomiche (file temporaneo + rename).
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    @staticmethod
    def key(identity: str, model: str, text: str) -> str:
        return hashlib.sha256(f"{identity}\n{model}\n{text}".encode("utf-8")).hexdigest()

    def get(self, key: str) -> np.ndarray | None:
        path = self.directory / f"{key}.json"
        try:
            entry = orjson.loads(path.read_bytes())
        except FileNotFoundError:
            return None
        except orjson.JSONDecodeError:
            logger.warning(f"Ignoring corrupt cache entry {path.name}")
            return None
        vector = np.asarray(entry["vector"], dtype=np.float64)
        if vector.shape != (entry["dim"],):
            logger.warning(f"Ignoring cache entry {path.name} with inconsistent dimension")
            return None
        return vector

    async def put(self, key: str, text: str, model: str, vector: np.ndarray) -> None:
        payload = orjson.dumps({"text": text, "model": model, "dim": int(vector.shape[0]),
                                "vector": vector.tolist()}, option=orjson.OPT_SORT_KEYS)
        with self._write_lock:
            atomic_write_bytes(self.directory / f"{key}.json", payload)


class Embedder:
    """Backend + cache + controllo della dimensione + concorrenza limitata.

    Attributes:
        dim (int | None): Dimensione d_c fissata dal primo vettore ricevuto.
        hits (int): Testi serviti dalla cache.
        misses (int): Testi richiesti al backend.
    """

    def __init__(self, backend: EmbeddingBackend, cache: EmbeddingCache | None = None,
                 max_concurrency: int = settings.EMBEDDING_MAX_CONCURRENCY,
                 batch_size: int = settings.EMBEDDING_BATCH_SIZE):
        self.backend = backend
        self.cache = cache
        self.batch_size = max(1, batch_size)
        self.max_concurrency = max(1, max_concurrency)
        self.dim: int | None = None
        self.hits = 0
        self.misses = 0

    def _check(self, vector: np.ndarray) -> np.ndarray:
        if vector.ndim != 1 or vector.size == 0 or not np.all(np.isfinite(vector)):
            raise EmbeddingServiceError("Embedding is not a finite vector", backend=self.backend.identity)
        if self.dim is None:
            self.dim = int(vector.shape[0])
        elif vector.shape[0] != self.dim:
            raise DimensionDriftError(self.backend.identity, self.dim, int(vector.shape[0]))
        return vector

    async def _fetch(self, texts: list[str], semaphore: asyncio.Semaphore) -> list[np.ndarray]:
        async with semaphore:
            return await self.backend.embed_batch(texts)

    async def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Embedding di una lista di testi, con deduplicazione e cache.

        Raises:
            ContextError: Testo vuoto.
            EmbeddingServiceError: Backend irraggiungibile dopo i tentativi.
            DimensionDriftError: Dimensione diversa da quella già osservata.
        """
        unique = list(dict.fromkeys(texts))
        if any(not t for t in unique):
            raise ContextError("cannot embed empty text")

        vectors: dict[str, np.ndarray] = {}
        missing: list[str] = []
        for text in unique:
            cached = None
            if self.cache is not None:
                cached = self.cache.get(EmbeddingCache.key(self.backend.identity, self.backend.model, text))
            if cached is not None:
                vectors[text] = self._check(cached)
                self.hits += 1
            else:
                missing.append(text)

        batches = [missing[i:i + self.batch_size] for i in range(0, len(missing), self.batch_size)]
        # un semaforo per chiamata: ogni asyncio.run ha il suo event loop
        semaphore = asyncio.Semaphore(self.max_concurrency)
        results = await asyncio.gather(*(self._fetch(batch, semaphore) for batch in batches))
        for batch, batch_vectors in zip(batches, results):
            for text, vector in zip(batch, batch_vectors):
                vector = self._check(np.asarray(vector, dtype=np.float64))
                vectors[text] = vector
                self.misses += 1
                if self.cache is not None:
                    key = EmbeddingCache.key(self.backend.identity, self.backend.model, text)
                    await self.cache.put(key, text, self.backend.model, vector)
        return [vectors[t] for t in texts]

    async def embed(self, text: str) -> np.ndarray:
        return (await self.embed_many([text]))[0]

    def run_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Come embed_many, da codice sincrono: un event loop per chiamata.

        Il client HTTP del backend viene chiuso prima che il loop termini, così chiamate successive
        non riusano connessioni legate a un loop già chiuso.
        """
        async def _run() -> list[np.ndarray]:
            try:
                return await self.embed_many(texts)
            finally:
                await self.backend.aclose()

        return asyncio.run(_run())

    @property
    def hit_ratio(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


async def embed(text: str, embedder: Embedder) -> np.ndarray:
    """Vettore d_c per un testo; testo e backend identici restituiscono lo stesso vettore."""
    return await embedder.embed(text)
