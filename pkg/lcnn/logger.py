import logging
import os

logging.basicConfig(
    level=os.environ.get("LCNN_LOG_LEVEL", "INFO").upper(),
    format="%(levelname)s - %(message)s",
)

logger = logging.getLogger("lcnn")


def set_verbosity(verbose: bool) -> None:
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
