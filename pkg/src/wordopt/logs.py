"""Central event log: one "timestamp level component job_id message" line per event."""

from __future__ import annotations

import logging
import sys

ROOT = "wordopt"
FORMAT = "%(asctime)s %(levelname)s %(component)s %(job_id)s %(message)s"


class _Defaults(logging.Filter):
    def filter(self, record):
        if not hasattr(record, "job_id"):
            record.job_id = "-"
        if not hasattr(record, "component"):
            record.component = record.name.rsplit(".", 1)[-1]
        return True


def get_logger(component: str) -> logging.Logger:
    logger = logging.getLogger(f"{ROOT}.{component}")
    if not any(isinstance(f, _Defaults) for f in logger.filters):
        logger.addFilter(_Defaults())
    return logger


class _LineFlushHandler(logging.FileHandler):
    def emit(self, record):
        super().emit(record)
        self.flush()


def configure(path=None, level=logging.INFO) -> logging.Handler:
    """Attach the central sink (a file, else stderr) to the package logger."""
    handler = _LineFlushHandler(path) if path else logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(FORMAT))
    handler.addFilter(_Defaults())
    root = logging.getLogger(ROOT)
    root.addHandler(handler)
    root.setLevel(level)
    return handler
