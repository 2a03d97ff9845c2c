from __future__ import annotations

from enum import Enum

import httpx

from app.core.config import settings
from app.core.exceptions import EmbeddingServiceError
from app.core.logging import get_logger

logger = get_logger(__name__)


class HttpMethod(str, Enum):
    GET = "GET"
    POST = "POST"


class HttpHeaders():
    """Rappresenta gli headers di una richiesta HTTP.
    Attributes:
        headers (dict): Dizionario degli headers HTTP.
    """

    def __init__(self, initial_headers: dict | None = None, token: str | None = None):
        self.headers = initial_headers.copy() if initial_headers else {}
        self.headers.setdefault("Content-Type", "application/json")
        self.headers.setdefault("Accept", "application/json")
        if token:
            self.headers["Authorization"] = f"Bearer {token}"

    def to_dict(self) -> dict:
        return self.headers


async_client: httpx.AsyncClient | None = None


async def init_client(timeout: float = settings.EMBEDDING_TIMEOUT) -> httpx.AsyncClient:
    global async_client
    if async_client is None:
        async_client = httpx.AsyncClient(timeout=timeout, follow_redirects=True)
    return async_client


async def close_client():
    global async_client
    if async_client:
        await async_client.aclose()
        async_client = None


def is_transient(exc: BaseException) -> bool:
    """Errori per cui ha senso ritentare: trasporto, 429 e 5xx."""
    return isinstance(exc, EmbeddingServiceError) and exc.transient


async def send_request(base_url: str, method: HttpMethod, endpoint: str, payload: dict | None = None,
                       headers: HttpHeaders | None = None, backend: str = "remote",
                       client: httpx.AsyncClient | None = None) -> tuple[dict | None, int]:
    """Invia una richiesta JSON e restituisce il corpo decodificato e lo status.

    Args:
        base_url (str): URL base del servizio.
        method (HttpMethod): Metodo HTTP da utilizzare.
        endpoint (str): Endpoint specifico del servizio.
        payload (dict, optional): Corpo JSON (POST) o parametri di query (GET).
        headers (HttpHeaders, optional): Headers della richiesta.
        backend (str): Identità del backend, riportata negli errori.
        client (httpx.AsyncClient, optional): Client da usare al posto di quello condiviso.

    Raises:
        EmbeddingServiceError: Errore di connessione, status >= 400 o corpo non JSON.
    Returns:
        tuple[dict | None, int]: Risposta JSON (o None) e codice di stato HTTP.
    """
    if client is None:
        client = await init_client()

    full_url = f"{base_url.rstrip('/')}{endpoint}"
    headers_dict = headers.to_dict() if headers else HttpHeaders().to_dict()

    try:
        match method:
            case HttpMethod.GET:
                resp = await client.get(full_url, headers=headers_dict, params=payload or {})
            case HttpMethod.POST:
                resp = await client.post(full_url, headers=headers_dict, json=payload or {})
            case _:
                raise ValueError(f"Unsupported HTTP method: {method}")
    except httpx.HTTPError as e:
        raise EmbeddingServiceError("HTTP Error. Unable to fetch.", backend=backend,
                                    details={"url": full_url}, exc=e)

    if resp.status_code >= 400:
        try:
            body = resp.json() if resp.content else {}
        except ValueError:
            body = {"message": resp.text}
        message = body.get("message") if isinstance(body, dict) else None
        if message is None and isinstance(body, dict) and isinstance(body.get("error"), dict):
            message = body["error"].get("message")
        raise EmbeddingServiceError(message or f"HTTP Error. Unable to fetch. {resp.status_code}",
                                    backend=backend, status_code=resp.status_code, details={"url": full_url})

    json_data = None
    if resp.content:
        try:
            json_data = resp.json()
        except ValueError as e:
            raise EmbeddingServiceError("Invalid JSON from embedding service", backend=backend,
                                        status_code=resp.status_code, details={"url": full_url}, exc=e)
    return json_data, resp.status_code
