"""
Density control.

Accumulates screen-space gradient statistics over rendered views and turns them into
clone / split / prune edits of a cloud. Two scores are available:

    baseline     sum_k |g_k| / M                 (mean over valid views)
    pixel-aware  sum_k m_k |g_k| / sum_k m_k     (coverage-weighted mean)

where g_k is dL_k/d(center_ndc) in view k and m_k the pixel coverage counted by the
rasterizer. With m_k constant across views the two scores coincide.
"""

from typing import Optional

import numpy as np
import pandas as pd

from global_state import state
from errors import ContractViolation, PruneError
from data_types.cloud import GaussianCloud
from data_types.densify_types import DensifyStats, DensifyOutcome, DensifyEvent
from data_types.enums import DENSIFY_POLICY, DECISION
from data_types.render_types import RenderArtifacts
from data_types.run_config import DensifyConfig
from logic import gsmath
from services.run_logs import append_csv_rows


def accumulate_view(stats: DensifyStats, grad_norm: np.ndarray, coverage: np.ndarray, valid: np.ndarray,
                    policy: DENSIFY_POLICY = DENSIFY_POLICY.PIXEL_AWARE) -> DensifyStats:
    """
    Add one view's observations to the accumulators.

    Args:
        stats (DensifyStats): Accumulators so far
        grad_norm (np.ndarray): (N,) |dL/d center_ndc| in this view
        coverage (np.ndarray): (N,) pixel coverage m in this view
        valid (np.ndarray): (N,) bool, depth/bounds validity in this view
        policy (DENSIFY_POLICY): Pixel-aware additionally requires m > 0

    Returns:
        DensifyStats: New accumulators

    Raises:
        ContractViolation: If any array length differs from stats.n
    """
    grad_norm = np.asarray(grad_norm, dtype=np.float64)
    coverage = np.asarray(coverage, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    for name, arr in (("grad_norm", grad_norm), ("coverage", coverage), ("valid", valid)):
        if arr.shape != (stats.n,):
            state.logger.error(f"accumulate: {name} has shape {arr.shape}, stats cover {stats.n} Gaussians")
            raise ContractViolation(f"accumulate: {name} has shape {arr.shape}, stats cover {stats.n} Gaussians")

    seen = valid.copy()
    if policy == DENSIFY_POLICY.PIXEL_AWARE:
        seen &= coverage > 0
    out = stats.copy()
    out.sum_w_grad[seen] += coverage[seen] * grad_norm[seen]
    out.sum_m[seen] += coverage[seen]
    out.sum_grad[seen] += grad_norm[seen]
    out.views_seen[seen] += 1
    out.grad_min[seen] = np.minimum(out.grad_min[seen], grad_norm[seen])
    out.grad_max[seen] = np.maximum(out.grad_max[seen], grad_norm[seen])
    return out


def accumulate(stats: DensifyStats, artifacts: RenderArtifacts,
               policy: DENSIFY_POLICY = DENSIFY_POLICY.PIXEL_AWARE) -> DensifyStats:
    """
    Add the observations of one rendered view (backward must have run).

    Args:
        stats (DensifyStats): Accumulators so far
        artifacts (RenderArtifacts): Render whose ndc_grad_norm was filled by backward
        policy (DENSIFY_POLICY): Active policy

    Returns:
        DensifyStats: New accumulators
    """
    per = artifacts.per_gaussian
    return accumulate_view(stats, per.ndc_grad_norm, per.coverage, per.valid, policy)


def scores(stats: DensifyStats, policy: DENSIFY_POLICY) -> np.ndarray:
    """
    Densification score of every Gaussian.

    Gaussians never observed (or with zero total coverage under pixel-aware) score 0.
    Scores are clipped to the range of the per-view gradient norms they average, which
    only removes floating-point round-off.
    """
    if policy == DENSIFY_POLICY.BASELINE:
        num, den = stats.sum_grad, stats.views_seen.astype(np.float64)
    else:
        num, den = stats.sum_w_grad, stats.sum_m
    seen = den > 0
    out = np.zeros(stats.n)
    out[seen] = np.clip(num[seen] / den[seen], stats.grad_min[seen], stats.grad_max[seen])
    return out


def decide(stats: DensifyStats, cfg: DensifyConfig, cloud: GaussianCloud, extent: float) -> np.ndarray:
    """
    Per-Gaussian clone / split decision.

    A Gaussian whose score exceeds tau_pos is cloned when its largest activated scale
    is at most split_scale_threshold * extent, split otherwise.

    Args:
        stats (DensifyStats): Accumulators
        cfg (DensifyConfig): Thresholds and policy
        cloud (GaussianCloud): Cloud the stats belong to
        extent (float): Scene extent

    Returns:
        np.ndarray: (N,) int8 DECISION values

    Raises:
        ContractViolation: If stats and cloud sizes differ
    """
    if stats.n != cloud.n:
        state.logger.error(f"decide: stats cover {stats.n} Gaussians, cloud has {cloud.n}")
        raise ContractViolation(f"decide: stats cover {stats.n} Gaussians, cloud has {cloud.n}")
    score = scores(stats, cfg.policy)
    hot = score > cfg.tau_pos
    small = np.exp(cloud.raw_scales).max(axis=1) <= cfg.split_scale_threshold * extent
    decisions = np.full(cloud.n, DECISION.NONE.value, dtype=np.int8)
    decisions[hot & small] = DECISION.CLONE.value
    decisions[hot & ~small] = DECISION.SPLIT.value
    return decisions


def sample_split_positions(cloud: GaussianCloud, parents: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    One child mean per entry of `parents`, drawn from that parent's activated density
    N(mu, R S S^T R^T).

    Args:
        cloud (GaussianCloud): Cloud holding the parents
        parents (np.ndarray): (K,) parent rows, repeated once per child
        rng (np.random.Generator): Child sampler

    Returns:
        np.ndarray: (K, 3) child positions
    """
    parents = np.asarray(parents, dtype=np.int64)
    rotations = gsmath.quat_to_rotation_batch(cloud.raw_rotations[parents])
    z = rng.standard_normal((parents.size, 3))
    offsets = np.einsum("nij,nj->ni", rotations, z * np.exp(cloud.raw_scales[parents]))
    return cloud.positions[parents] + offsets


def apply(cloud: GaussianCloud, decisions: np.ndarray, cfg: DensifyConfig, rng_seed,
          score: Optional[np.ndarray] = None) -> DensifyOutcome:
    """
    Apply clone and split decisions.

    Output order is the untouched rows (clone parents included) in their original
    order, then one duplicate per clone, then two children per split parent. Each
    edit grows the cloud by one; when the budget max_points would be exceeded the
    lowest-scoring decisions are dropped (ties keep index order).

    Args:
        cloud (GaussianCloud): Cloud to edit
        decisions (np.ndarray): (N,) DECISION values
        cfg (DensifyConfig): split_factor and max_points
        rng_seed: Seed of the child sampler (int or sequence of ints)
        score (np.ndarray, optional): Priority used when decisions must be dropped

    Returns:
        DensifyOutcome: New cloud, lineage, parent rows and counts

    Raises:
        ContractViolation: If decisions do not have length N
    """
    decisions = np.asarray(decisions, dtype=np.int8).copy()
    if decisions.shape != (cloud.n,):
        state.logger.error(f"apply: {decisions.shape[0]} decisions for {cloud.n} Gaussians")
        raise ContractViolation(f"apply: {decisions.shape[0]} decisions for {cloud.n} Gaussians")

    active = np.flatnonzero(decisions != DECISION.NONE.value)
    budget = max(0, cfg.max_points - cloud.n)
    n_dropped = 0
    if active.size > budget:
        priority = np.zeros(cloud.n) if score is None else np.asarray(score, dtype=np.float64)
        ranked = active[np.argsort(-priority[active], kind="stable")]
        dropped = ranked[budget:]
        decisions[dropped] = DECISION.NONE.value
        n_dropped = int(dropped.size)
        state.logger.info(f"Densify budget of {cfg.max_points} points reached, dropped {n_dropped} decisions")

    clones = np.flatnonzero(decisions == DECISION.CLONE.value)
    splits = np.flatnonzero(decisions == DECISION.SPLIT.value)
    keep = np.flatnonzero(decisions != DECISION.SPLIT.value)
    if clones.size == 0 and splits.size == 0:
        rows = np.arange(cloud.n)
        return DensifyOutcome(cloud=cloud.copy(), lineage=rows, parents=rows.copy(), n_dropped=n_dropped)

    rng = np.random.default_rng(rng_seed)
    rows = np.concatenate([keep, clones])
    arrays = {name: arr[rows] for name, arr in cloud.params().items()}
    split_parents = np.repeat(splits, 2)
    if splits.size:
        children = {name: arr[split_parents] for name, arr in cloud.params().items()}
        children["positions"] = sample_split_positions(cloud, split_parents, rng)
        children["raw_scales"] = children["raw_scales"] - np.log(cfg.split_factor)
        arrays = {name: np.concatenate([arrays[name], children[name]], axis=0) for name in arrays}
    out = GaussianCloud(**arrays)
    lineage = np.concatenate([keep, np.full(clones.size + 2 * splits.size, -1)])
    parents = np.concatenate([keep, clones, split_parents])
    return DensifyOutcome(cloud=out, lineage=lineage, parents=parents, n_clone=int(clones.size),
                          n_split=int(splits.size), n_dropped=n_dropped)


def prune_mask(cloud: GaussianCloud, cfg: DensifyConfig, extent: float) -> np.ndarray:
    """
    Gaussians to remove: activated opacity below prune_opacity or largest activated
    scale above the scene extent.
    """
    opacity = gsmath.sigmoid(cloud.raw_opacities)
    too_big = np.exp(cloud.raw_scales).max(axis=1) > extent
    return (opacity < cfg.prune_opacity) | too_big


def prune(cloud: GaussianCloud, cfg: DensifyConfig, extent: float = 1.0) -> GaussianCloud:
    """
    Remove transparent and oversized Gaussians.

    Raises:
        PruneError: If every Gaussian would be removed
    """
    mask = prune_mask(cloud, cfg, extent)
    if mask.all():
        state.logger.error(f"Pruning would remove all {cloud.n} Gaussians")
        raise PruneError(f"Pruning would remove all {cloud.n} Gaussians")
    return cloud.take(~mask)


def reset_opacity(cloud: GaussianCloud, ceiling: float) -> GaussianCloud:
    """Clamp activated opacities down to at most `ceiling`."""
    return cloud.with_params(raw_opacities=np.minimum(cloud.raw_opacities, gsmath.logit(ceiling)))


class DensifyController:
    """
    Runs the densification schedule of one branch.

    Accumulation happens after every backward pass; every `interval` iterations in
    [start_iter, stop_iter) the controller decides, applies and prunes, then resets the
    accumulators. Each pass is recorded as a DensifyEvent (and appended to the
    densify-event CSV when a log path is set) together with its decision vector.

    Attributes:
        cfg (DensifyConfig): Schedule and thresholds
        extent (float): Scene extent used by clone/split and pruning
        stats (DensifyStats): Current accumulators
        events (list[DensifyEvent]): Passes run so far
    """

    def __init__(self, cfg: DensifyConfig, n: int, extent: float, seed: int = 0,
                 branch: str = "", log_path: Optional[str] = None):
        self.cfg = cfg
        self.extent = extent
        self.seed = seed
        self.branch = branch
        self.log_path = log_path
        self.stats = DensifyStats.zeros(n)
        self.events: list[DensifyEvent] = []

    def observe(self, artifacts: RenderArtifacts):
        self.stats = accumulate(self.stats, artifacts, self.cfg.policy)

    def due(self, iteration: int) -> bool:
        cfg = self.cfg
        return (
            cfg.enabled
            and cfg.start_iter <= iteration < cfg.stop_iter
            and iteration > 0
            and iteration % cfg.interval == 0
        )

    def opacity_reset_due(self, iteration: int) -> bool:
        cfg = self.cfg
        return cfg.enabled and cfg.opacity_reset and iteration > 0 and iteration % cfg.opacity_reset_interval == 0

    def step(self, iteration: int, cloud: GaussianCloud) -> tuple[GaussianCloud, np.ndarray]:
        """
        Run one densify + prune pass.

        Args:
            iteration (int): Current iteration (also salts the split sampler)
            cloud (GaussianCloud): Current cloud

        Returns:
            tuple: new cloud and lineage (source row per output row, -1 for new rows)
        """
        decisions = decide(self.stats, self.cfg, cloud, self.extent)
        score = scores(self.stats, self.cfg.policy)
        outcome = apply(cloud, decisions, self.cfg, rng_seed=[self.seed, iteration], score=score)

        mask = prune_mask(outcome.cloud, self.cfg, self.extent)
        if mask.all():
            state.logger.warning(f"Skipping prune at iteration {iteration}: it would empty the {self.branch} cloud")
            mask[:] = False
        new_cloud = outcome.cloud.take(~mask)
        lineage = outcome.lineage[~mask]

        event = DensifyEvent(
            iteration=iteration,
            policy=self.cfg.policy.value,
            n_clone=outcome.n_clone,
            n_split=outcome.n_split,
            n_pruned=int(mask.sum()),
            n_after=new_cloud.n,
            branch=self.branch,
            decisions=decisions,
            parents=outcome.parents[~mask],
        )
        self.events.append(event)
        state.logger.info(
            f"Densify [{self.branch or 'cloud'}] it={iteration} policy={event.policy} "
            f"clone={event.n_clone} split={event.n_split} pruned={event.n_pruned} N={event.n_after}"
        )
        if self.log_path:
            append_csv_rows(self.log_path, [event.to_row()])
        self.stats = DensifyStats.zeros(new_cloud.n)
        return new_cloud, lineage

    def event_frame(self) -> pd.DataFrame:
        columns = ["iteration", "branch", "policy", "n_clone", "n_split", "n_pruned", "n_after"]
        return pd.DataFrame([e.to_row() for e in self.events], columns=columns)

    def decision_frame(self) -> pd.DataFrame:
        return decision_frame(self.events)


def decision_frame(events: list[DensifyEvent]) -> pd.DataFrame:
    """One row per (pass, Gaussian) with the decision taken."""
    rows = []
    for e in events:
        for index, decision in enumerate(e.decisions):
            rows.append({"iteration": e.iteration, "branch": e.branch, "index": index,
                         "decision": DECISION(int(decision)).name.lower()})
    return pd.DataFrame(rows, columns=["iteration", "branch", "index", "decision"])
