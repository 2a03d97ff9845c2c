from __future__ import annotations

import sys
from typing import Sequence

import sentry_sdk
from sentry_sdk.integrations.httpx import HttpxIntegration

from app.cli.parser import build_parser
from app.core.config import settings
from app.core.exceptions import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, FlowContextException
from app.core.logging import get_logger, setup_logging

logger = get_logger(__name__)


def init_error_reporting() -> None:
    # con DSN vuoto l'SDK resta disattivato
    sentry_sdk.init(
        dsn=settings.SENTRY_DSN or None,
        environment=settings.ENVIRONMENT,
        release=settings.SENTRY_RELEASE,
        integrations=[HttpxIntegration()],
    )
    sentry_sdk.set_tag("service.name", settings.SERVICE_NAME)


def flowcontext_exception_handler(exc: FlowContextException) -> int:
    print(f"error: {exc.message}", file=sys.stderr)
    if exc.details:
        print(f"details: {exc.details}", file=sys.stderr)
    if exc.exit_code != EXIT_USAGE:
        sentry_sdk.capture_exception(exc)
    return exc.exit_code


def file_not_found_handler(exc: FileNotFoundError) -> int:
    logger.error(f"File not found: {exc}")
    print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
    return EXIT_RUNTIME


def global_exception_handler(exc: Exception) -> int:
    logger.error(f"Unhandled exception: {exc}", exc_info=True)
    sentry_sdk.capture_exception(exc)
    print("error: internal error, see the log for the traceback", file=sys.stderr)
    return EXIT_RUNTIME


def main(argv: Sequence[str] | None = None) -> int:
    """Punto di ingresso della CLI.

    Returns:
        int: 0 in caso di successo, 1 per errori di utilizzo, 2 per errori a runtime.
    """
    setup_logging(settings.LOG_LEVEL)
    init_error_reporting()

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    logger.info(f"{settings.SERVICE_NAME} {settings.SERVICE_VERSION}: {args.command}")
    try:
        args.handler(args)
    except FlowContextException as e:
        return flowcontext_exception_handler(e)
    except FileNotFoundError as e:
        return file_not_found_handler(e)
    except Exception as e:
        return global_exception_handler(e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
