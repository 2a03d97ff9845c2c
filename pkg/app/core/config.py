from __future__ import annotations

import tomllib
from pathlib import Path
from typing import Any

from pydantic import ValidationError
from pydantic_settings import SettingsConfigDict, BaseSettings

from app.core.exceptions import ConfigError


class Settings(BaseSettings):
    SERVICE_NAME: str = "flowcontext"
    SERVICE_VERSION: str = "0.1.0"
    ENVIRONMENT: str = "development"
    LOG_LEVEL: str = "INFO"
    SENTRY_DSN: str = ""
    SENTRY_RELEASE: str = "0.1.0"

    #### EMBEDDING SERVICE              # noqa: E266
    EMBEDDING_SERVICE_URL: str = "https://api.openai.com"
    EMBEDDING_ENDPOINT: str = "/v1/embeddings"
    EMBEDDING_MODEL: str = "text-embedding-3-small"
    EMBEDDING_API_TOKEN: str = ""
    EMBEDDING_TIMEOUT: float = 30.0
    EMBEDDING_MAX_CONCURRENCY: int = 4
    EMBEDDING_RETRIES: int = 5
    EMBEDDING_BATCH_SIZE: int = 64

    #### CACHE              # noqa: E266
    CACHE_DIR: str = ".cache/embeddings"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="FLOWCTX_"  # Prefisso di tutte le variabili (es. FLOWCTX_EMBEDDING_API_TOKEN)
    )


settings = Settings()


def load_experiment_config(path: str | Path | None, overrides: dict[str, Any] | None = None):
    """Legge il file TOML dell'esperimento e lo valida come ExperimentConfig.

    Args:
        path (str | Path | None): Percorso del file TOML. Se None si usano solo i default.
        overrides (dict | None): Valori annidati (es. {"context": {"backend": "offline"}}) che
            sovrascrivono quelli del file, tipicamente provenienti dai flag della CLI.

    Raises:
        ConfigError: File illeggibile, TOML non valido o valori fuori dominio.

    Returns:
        ExperimentConfig: Configurazione validata.
    """
    from app.schemas.experiment import ExperimentConfig

    raw: dict[str, Any] = {}
    if path is not None:
        try:
            raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {path}", exc=e)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Invalid TOML in {path}: {e}", exc=e)

    merged = _deep_merge(raw, overrides or {})
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError("Invalid experiment configuration",
                          details={"errors": [{"loc": err.get("loc"), "msg": err.get("msg")} for err in e.errors()]},
                          exc=e)


def _deep_merge(base: dict[str, Any], extra: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in extra.items():
        if value is None:
            continue
        if isinstance(value, dict):
            current = out.get(key)
            out[key] = _deep_merge(current if isinstance(current, dict) else {}, value)
        else:
            out[key] = value
    return out
