"""
CSV run logs and atomic file writes.

Training logs (iter, stage, branch, loss, psnr, N, densified), densify-event logs and
comparison reports are pandas tables written as CSV. Whole-file writes go through a
temporary file in the destination directory followed by os.replace, so readers never
observe a partially written file.
"""

import os
import tempfile
from typing import Iterable

import pandas as pd

try:
    from ..global_state import state
except ImportError:
    from global_state import state

TRAIN_LOG_COLUMNS = ["iter", "stage", "branch", "loss", "psnr", "N", "densified"]


def atomic_write_bytes(path: str, data: bytes):
    """
    Write bytes to path through a temporary file and a rename.

    Args:
        path (str): Destination file
        data (bytes): Content
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp_", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_csv(frame: pd.DataFrame, path: str):
    """Write a table as CSV atomically."""
    atomic_write_bytes(path, frame.to_csv(index=False).encode("utf-8"))
    state.logger.debug(f"Wrote {len(frame)} rows to {path}")


def append_csv_rows(path: str, rows: Iterable[dict]):
    """
    Append rows to a CSV log, writing the header when the file is new.

    Args:
        path (str): Log file
        rows (Iterable[dict]): Rows keyed by column name
    """
    frame = pd.DataFrame(list(rows))
    if frame.empty:
        return
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    exists = os.path.exists(path) and os.path.getsize(path) > 0
    frame.to_csv(path, mode="a", header=not exists, index=False)


def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path)


class TrainLog:
    """
    In-memory training log, flushed to CSV on demand.

    Attributes:
        rows (list[dict]): One entry per logged iteration
    """

    def __init__(self):
        self.rows: list[dict] = []

    def record(self, iteration: int, stage: str, branch: str, loss: float, psnr: float, n: int, densified: int = 0):
        self.rows.append({
            "iter": int(iteration),
            "stage": stage,
            "branch": branch,
            "loss": float(loss),
            "psnr": float(psnr),
            "N": int(n),
            "densified": int(densified),
        })

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=TRAIN_LOG_COLUMNS)

    def extend(self, other: "TrainLog"):
        self.rows.extend(other.rows)

    def save(self, path: str):
        write_csv(self.frame(), path)

    def __len__(self) -> int:
        return len(self.rows)
