from __future__ import annotations

import traceback

from app.core.logging import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class FlowContextException(Exception):
    """Eccezione generica della pipeline.

    Attributes:
        message (str): Messaggio di errore generale.
        details (dict): Dettagli strutturati (riportati nel manifest e nei log).
        exit_code (int): Codice di uscita della CLI associato all'errore.
        exc (Exception | None): Eccezione originale, se presente.
    """

    exit_code: int = EXIT_RUNTIME

    def __init__(self, message: str = "Runtime error", details: dict | None = None,
                 exit_code: int | None = None, exc: Exception | None = None):
        super().__init__(message)
        self.message = message
        self.details = details if details is not None else {}
        if exit_code is not None:
            self.exit_code = exit_code
        self.exc = exc
        if self.exit_code == EXIT_RUNTIME and exc is not None:
            exc_tb = "".join(traceback.format_exception(type(exc), exc, exc.__traceback__))
            logger.error(f"{type(self).__name__}: {self.message}\nECCEZIONE ORIGINALE:\n{exc_tb}")
        else:
            logger.warning(f"{type(self).__name__}: {self.message} {self.details or ''}".rstrip())


class ConfigError(FlowContextException):
    exit_code = EXIT_USAGE


class DataValidationError(FlowContextException):
    pass


class InsufficientHistoryError(DataValidationError):
    def __init__(self, t_hours: int, needed: int):
        super().__init__("insufficient history", details={"T_hours": t_hours, "needed": needed})


class IngestionError(FlowContextException):
    pass


class ContextError(FlowContextException):
    pass


class EmbeddingServiceError(FlowContextException):
    """Errore del backend di embedding (servizio irraggiungibile o risposta non valida).

    Attributes:
        transient (bool): Se ha senso ritentare. Default: errori di trasporto, 429 e 5xx.
    """

    def __init__(self, message: str, backend: str, status_code: int | None = None,
                 details: dict | None = None, exc: Exception | None = None, transient: bool | None = None):
        self.backend = backend
        self.status_code = status_code
        if transient is None:
            transient = status_code is None or status_code == 429 or status_code >= 500
        self.transient = transient
        merged = {"backend": backend, "status_code": status_code, **(details or {})}
        super().__init__(message, details=merged, exc=exc)


class DimensionDriftError(FlowContextException):
    def __init__(self, backend: str, expected: int, got: int):
        self.backend = backend
        super().__init__("embedding dimension drift",
                         details={"backend": backend, "expected": expected, "got": got})


class ReductionError(FlowContextException):
    pass


class AugmentationError(FlowContextException):
    pass


class ModelInputError(FlowContextException):
    pass


class TrainingDivergedError(FlowContextException):
    pass


class EvaluationError(FlowContextException):
    pass


class PlotError(FlowContextException):
    pass
