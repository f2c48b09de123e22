import logging
import sys

from src.utils.errors import BridgePixelCNNError, ExitStatus

logger = logging.getLogger(__name__)


def exit_status(ex: BaseException) -> ExitStatus:
    """Map an exception onto the CLI exit status."""
    if isinstance(ex, BridgePixelCNNError):
        return ex.status
    if isinstance(ex, OSError):
        return ExitStatus.IO_ERROR
    return ExitStatus.FAILURE


def abort_with(ex: BaseException) -> int:
    status = exit_status(ex)
    print(f"error: {ex}", file=sys.stderr)
    logger.debug("aborting with status %s", status.name, exc_info=ex)
    return status.value
