"""
Process-wide logger and run progress.

One GLOBAL_STATE instance, `state`, is shared by every module. It owns the
"global_state" logger, remembers the most recent log records and tracks which parts
of a run have finished (config, dataset, the three training stages, the checkpoint).

After load(log_dir) every flag change, finished stage and exception is mirrored to
<log_dir>/execution_state_<timestamp>.json, and exceptions additionally to
<log_dir>/exception_<timestamp>.json, so an interrupted fit can be inspected later.
Before load() nothing touches the filesystem.
"""

import os
import json
import logging
import traceback
from collections import deque
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Iterator, Optional

PIPELINE_FLAGS = (
    "configInitialized",
    "datasetLoaded",
    "staticStageDone",
    "deformStageDone",
    "finetuneStageDone",
    "checkpointWritten",
)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_BUFFER_LIMIT = 2000
SNAPSHOT_LOG_LINES = 50


class RecentRecords(logging.Handler):
    """Keeps the last `limit` records as plain dicts for snapshots."""

    def __init__(self, limit: int = LOG_BUFFER_LIMIT):
        super().__init__()
        self.records: deque = deque(maxlen=limit)

    def emit(self, record: logging.LogRecord):
        self.records.append({
            "time": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        })


def _build_logger(recent: RecentRecords) -> logging.Logger:
    logger = logging.getLogger("global_state")
    logger.setLevel(logging.DEBUG)
    logger.propagate = False
    logger.handlers.clear()

    console = logging.StreamHandler()
    console.setLevel(logging.INFO)
    console.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(console)
    logger.addHandler(recent)
    return logger


class GLOBAL_STATE:
    """
    Logger, pipeline flags and optional JSON persistence.

    Attributes:
        logger (logging.Logger): Logger used by every module
        recent (RecentRecords): Handler holding the latest log records
        flags (dict[str, bool]): Completion flag of each pipeline step
        timestamp (str): Run id (YYYYMMDD_HHMMSS), set by load()
        log_dir (str): Snapshot directory, set by load()
    """

    def __init__(self):
        self.recent = RecentRecords()
        self.logger = _build_logger(self.recent)
        self.flags: dict[str, bool] = dict.fromkeys(PIPELINE_FLAGS, False)
        self.timestamp: Optional[str] = None
        self.log_dir: Optional[str] = None

    def __getattr__(self, name: str):
        # flags read as attributes: state.staticStageDone
        flags = self.__dict__.get("flags", {})
        if name in flags:
            return flags[name]
        raise AttributeError(name)

    def load(self, log_dir: str = "logs"):
        """
        Start a new run: clear the flags and persist snapshots under `log_dir`.

        Args:
            log_dir (str): Directory for the snapshot and exception files
        """
        self.timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        self.flags = dict.fromkeys(PIPELINE_FLAGS, False)
        os.makedirs(log_dir, exist_ok=True)
        self.log_dir = log_dir
        self.save_state("load")

    def _path(self, prefix: str) -> Optional[str]:
        if not self.log_dir:
            return None
        return os.path.join(self.log_dir, f"{prefix}_{self.timestamp}.json")

    def _dump(self, path: Optional[str], payload: dict):
        if path is None:
            return
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(payload, f, indent=2, default=str)
        except OSError as e:
            # the console handler still has the message
            self.logger.warning(f"Could not write {path}: {e}")

    def snapshot(self) -> dict[str, Any]:
        """Flags plus the last few log records, as written to the state file."""
        return {
            "timestamp": self.timestamp,
            "written_at": datetime.now().isoformat(),
            "pipeline_flags": dict(self.flags),
            "logs": list(self.recent.records)[-SNAPSHOT_LOG_LINES:],
        }

    def save_state(self, reason: str = "routine_save"):
        self._dump(self._path("execution_state"), {**self.snapshot(), "save_reason": reason})

    def update_flag(self, flag_name: str, value: bool = True):
        """
        Set a pipeline flag and persist the state.

        Raises:
            AttributeError: If flag_name is not a pipeline flag
        """
        if flag_name not in self.flags:
            raise AttributeError(f"Unknown pipeline flag: {flag_name}")
        self.flags[flag_name] = value
        self.logger.info(f"{flag_name} = {value}")
        self.save_state(f"flag_{flag_name}")

    def log_exception(self, exception: BaseException, context: str = ""):
        """
        Record an exception: log it, save the state and write an exception file.

        Call from inside the except block so the traceback is the live one.
        """
        trace = traceback.format_exc()
        self.logger.error(f"{context}: {type(exception).__name__}: {exception}")
        self.logger.debug(trace)
        self.save_state("exception")
        self._dump(self._path("exception"), {
            "type": type(exception).__name__,
            "message": str(exception),
            "context": context,
            "traceback": trace,
            "pipeline_flags": dict(self.flags),
        })

    @contextmanager
    def pipeline_context(self, stage_name: str) -> Iterator["GLOBAL_STATE"]:
        """
        Log the start and end of a stage or command. Exceptions are recorded and re-raised.

        Usage:
            with state.pipeline_context("static"):
                run_stage_static(scene, dataset, cfg)
        """
        self.logger.info(f"[{stage_name}] started")
        try:
            yield self
        except BaseException as e:
            self.log_exception(e, f"[{stage_name}]")
            raise
        self.logger.info(f"[{stage_name}] done")
        self.save_state(f"done_{stage_name}")

    def reset(self):
        """Save once more, then forget flags, records and the snapshot directory."""
        self.save_state("reset")
        self.flags = dict.fromkeys(PIPELINE_FLAGS, False)
        self.recent.records.clear()
        self.timestamp = None
        self.log_dir = None


state = GLOBAL_STATE()
