"""
Adam with per-group learning rates.

Parameters are dicts of named arrays; each name is its own group with its own
first/second moments. Moments of cloud parameters are remapped after densification
through the lineage vector returned by densctl.apply (new rows start from zero).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from global_state import state
from errors import ContractViolation, NumericalError


@dataclass
class AdamState:
    """
    Attributes:
        m (dict[str, np.ndarray]): First moment per group
        v (dict[str, np.ndarray]): Second moment per group
        t (dict[str, int]): Step count per group
    """
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: dict = field(default_factory=dict)


def check_finite(grads: dict[str, np.ndarray], prefix: str = ""):
    """
    Raises:
        NumericalError: Naming the first group that holds a NaN or infinity
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            group = f"{prefix}{name}"
            state.logger.error(f"Non-finite gradient in parameter group '{group}'")
            raise NumericalError(f"Non-finite gradient in parameter group '{group}'", group=group)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], opt_state: AdamState,
              lr, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-15) -> tuple[dict, AdamState]:
    """
    One bias-corrected Adam update.

    Args:
        params (dict[str, np.ndarray]): Parameter arrays, updated in place
        grads (dict[str, np.ndarray]): Gradients keyed like params; missing keys are skipped
        opt_state (AdamState): Moments, updated in place
        lr (float | dict[str, float]): Learning rate, or one per group
        betas (tuple): (beta1, beta2)
        eps (float): Denominator floor

    Returns:
        tuple: params and opt_state

    Raises:
        ContractViolation: If a gradient's shape differs from its parameter
        NumericalError: If any gradient is not finite (no parameter is touched)
    """
    beta1, beta2 = betas
    check_finite(grads)
    for name, g in grads.items():
        if name in params and g.shape != params[name].shape:
            raise ContractViolation(f"Gradient of '{name}' has shape {g.shape}, parameter has {params[name].shape}")

    for name, g in grads.items():
        if name not in params:
            continue
        rate = lr.get(name, 0.0) if isinstance(lr, dict) else lr
        if name not in opt_state.m or opt_state.m[name].shape != g.shape:
            opt_state.m[name] = np.zeros_like(g)
            opt_state.v[name] = np.zeros_like(g)
            opt_state.t[name] = 0
        opt_state.t[name] += 1
        t = opt_state.t[name]
        m, v = opt_state.m[name], opt_state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        if rate == 0.0:
            continue
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        params[name] -= (rate / bc1) * m / (np.sqrt(v / bc2) + eps)
    return params, opt_state


class Adam:
    """
    Stateful wrapper over adam_step.

    Attributes:
        lr (dict[str, float]): Learning rate per group
        betas (tuple): (beta1, beta2)
        eps (float): Denominator floor
        state (AdamState): Moments
    """

    def __init__(self, lr: dict[str, float], betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-15):
        self.lr = dict(lr)
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        adam_step(params, grads, self.state, self.lr, self.betas, self.eps)

    def remap(self, lineage: np.ndarray, names: Optional[tuple] = None):
        """
        Follow a densify/prune edit of the rows of per-Gaussian groups.

        Args:
            lineage (np.ndarray): Source row of every output row, -1 for new rows
            names (tuple, optional): Groups to remap; every group by default
        """
        lineage = np.asarray(lineage)
        old_rows = lineage >= 0
        for name in list(self.state.m):
            if names is not None and name not in names:
                continue
            for moments in (self.state.m, self.state.v):
                old = moments[name]
                new = np.zeros((lineage.size,) + old.shape[1:])
                new[old_rows] = old[lineage[old_rows]]
                moments[name] = new

    def forget(self, names):
        for name in names:
            self.state.m.pop(name, None)
            self.state.v.pop(name, None)
            self.state.t.pop(name, None)
