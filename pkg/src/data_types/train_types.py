"""
Results of training runs, evaluations and render benchmarks.
"""

from dataclasses import dataclass, field
from typing import Optional

import pandas as pd

from data_types.densify_types import DensifyEvent

EVAL_COLUMNS = ["stage", "iteration", "N", "psnr", "ssim", "region_psnr"]


@dataclass
class EvalRecord:
    """
    Image quality of the whole scene at one point of a run.

    Attributes:
        stage (str): Stage during which the evaluation ran
        iteration (int): Global iteration
        n (int): Total Gaussians over both branches
        psnr (float): Mean full-frame PSNR over the evaluated frames
        ssim (float): Mean SSIM over the evaluated frames
        region_psnr (float, optional): PSNR inside the dataset's evaluation mask
    """
    stage: str
    iteration: int
    n: int
    psnr: float
    ssim: float
    region_psnr: Optional[float] = None

    def to_row(self) -> dict:
        return {
            "stage": self.stage,
            "iteration": self.iteration,
            "N": self.n,
            "psnr": self.psnr,
            "ssim": self.ssim,
            "region_psnr": self.region_psnr,
        }


@dataclass
class PipelineResult:
    """
    Everything a training run produced besides the scene itself.

    Attributes:
        stages (list[str]): Stages that ran, in order
        log (TrainLog): Per-iteration loss/PSNR rows
        densify_events (list[DensifyEvent]): Every densify pass of every branch
        evaluations (list[EvalRecord]): Periodic and end-of-stage evaluations
    """
    stages: list = field(default_factory=list)
    log: object = None
    densify_events: list[DensifyEvent] = field(default_factory=list)
    evaluations: list[EvalRecord] = field(default_factory=list)

    def evaluation_frame(self) -> pd.DataFrame:
        return pd.DataFrame([e.to_row() for e in self.evaluations], columns=EVAL_COLUMNS)

    @property
    def final(self) -> Optional[EvalRecord]:
        return self.evaluations[-1] if self.evaluations else None


@dataclass
class BenchResult:
    """
    Attributes:
        frames (int): Frames rendered (warm-up excluded)
        ms_per_frame (float): Mean wall time of deform + render + composite
        fps (float): 1000 / ms_per_frame
    """
    frames: int
    ms_per_frame: float
    fps: float
