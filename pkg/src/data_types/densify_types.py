"""
Densification statistics and outcomes.
"""

from dataclasses import dataclass, field

import numpy as np

from errors import ContractViolation
from data_types.cloud import GaussianCloud

ACCUMULATORS = ("sum_w_grad", "sum_m", "sum_grad", "views_seen", "grad_min", "grad_max")


@dataclass
class DensifyStats:
    """
    Per-Gaussian running sums across views.

    Attributes:
        sum_w_grad (np.ndarray): (N,) sum over views of m_k * |g_k|
        sum_m (np.ndarray): (N,) sum over views of m_k
        sum_grad (np.ndarray): (N,) sum over views of |g_k|
        views_seen (np.ndarray): (N,) int, number of accumulated observations
        grad_min, grad_max (np.ndarray): (N,) extreme per-view |g_k| seen so far,
            +inf / -inf before the first observation
    """
    sum_w_grad: np.ndarray
    sum_m: np.ndarray
    sum_grad: np.ndarray
    views_seen: np.ndarray
    grad_min: np.ndarray
    grad_max: np.ndarray

    @staticmethod
    def zeros(n: int) -> "DensifyStats":
        return DensifyStats(
            sum_w_grad=np.zeros(n),
            sum_m=np.zeros(n),
            sum_grad=np.zeros(n),
            views_seen=np.zeros(n, dtype=np.int64),
            grad_min=np.full(n, np.inf),
            grad_max=np.full(n, -np.inf),
        )

    @property
    def n(self) -> int:
        return self.sum_m.shape[0]

    def copy(self) -> "DensifyStats":
        return DensifyStats(**{name: getattr(self, name).copy() for name in ACCUMULATORS})

    def merge(self, other: "DensifyStats") -> "DensifyStats":
        """
        Combine accumulators gathered over disjoint sets of views.

        Commutative and associative, so views rendered concurrently can be reduced in
        any grouping.

        Raises:
            ContractViolation: If the two stats cover different Gaussian counts
        """
        if other.n != self.n:
            raise ContractViolation(f"Cannot merge densify stats of sizes {self.n} and {other.n}")
        return DensifyStats(
            sum_w_grad=self.sum_w_grad + other.sum_w_grad,
            sum_m=self.sum_m + other.sum_m,
            sum_grad=self.sum_grad + other.sum_grad,
            views_seen=self.views_seen + other.views_seen,
            grad_min=np.minimum(self.grad_min, other.grad_min),
            grad_max=np.maximum(self.grad_max, other.grad_max),
        )

    def to_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in ACCUMULATORS}


@dataclass
class DensifyOutcome:
    """
    Result of applying densification decisions.

    Attributes:
        cloud (GaussianCloud): Densified cloud; untouched rows first, then clones, then split children
        lineage (np.ndarray): (N_out,) source row of every output row, -1 for new rows
        parents (np.ndarray): (N_out,) input row every output row was copied or sampled from;
            equals lineage for kept rows, names the parent for clones and split children
        n_clone (int): Clones appended
        n_split (int): Parents replaced by two children
        n_dropped (int): Decisions discarded to respect max_points
    """
    cloud: GaussianCloud
    lineage: np.ndarray
    parents: np.ndarray
    n_clone: int = 0
    n_split: int = 0
    n_dropped: int = 0


@dataclass
class DensifyEvent:
    """
    One densify pass. `decisions` is indexed by the rows before the pass, `parents` maps
    every row after the pass (pruning included) to the row it came from.
    """
    iteration: int
    policy: str
    n_clone: int
    n_split: int
    n_pruned: int
    n_after: int
    branch: str = ""
    decisions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    parents: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def to_row(self) -> dict:
        return {
            "iteration": self.iteration,
            "branch": self.branch,
            "policy": self.policy,
            "n_clone": self.n_clone,
            "n_split": self.n_split,
            "n_pruned": self.n_pruned,
            "n_after": self.n_after,
        }
