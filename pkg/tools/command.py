#!/usr/bin/env python3
"""
Shared plumbing for command handlers: failures become a message on standard
error, a logged traceback and exit status 1.
"""

import sys
from typing import Callable

from src.errors import DatError

EXIT_OK = 0
EXIT_FAILURE = 1


def run_guarded(command: str, action: Callable[[], object], logger) -> int:
    """
    Run one command body.

    Args:
        command: Command name used in messages
        action: Zero-argument callable doing the work
        logger: Logger instance

    Returns:
        EXIT_OK when the action completed, EXIT_FAILURE otherwise
    """
    try:
        action()
    except (DatError, OSError) as e:
        logger.error("Command failed", exc_info=True, extra={'extra_data': {'command': command}})
        print(f"{command}: error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK
