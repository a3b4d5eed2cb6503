from typing import Optional

from global_state import state
from errors import ConfigError
from data_types.enums import BRANCH, DENSIFY_POLICY, STAGE, SYNTHETIC_RIG
from data_types.run_config import RunConfig, load_run_config


def convert_policy_to_enum(policy: str) -> DENSIFY_POLICY:
    """
    Convert a --policy value to a DENSIFY_POLICY enum.

    Raises:
        ConfigError: If the policy name is invalid
    """
    try:
        return DENSIFY_POLICY.from_str(policy)
    except ValueError as e:
        raise ConfigError(f"Invalid densify policy provided: {e}")


def convert_stages_list_to_enum(stages: list[str]) -> list[STAGE]:
    """
    Convert stage names to STAGE enums, dropping duplicates and keeping pipeline order.

    Raises:
        ConfigError: If any stage name is invalid
    """
    try:
        requested = {STAGE(stage.strip().lower()) for stage in stages if stage.strip()}
    except ValueError as e:
        raise ConfigError(f"Invalid stage provided: {e}. Expected any of: {[s.value for s in STAGE]}")
    return [stage for stage in STAGE if stage in requested]


def convert_stages_str_to_enum(stages: Optional[str]) -> Optional[list[STAGE]]:
    """
    Convert a comma-separated --stage value.

    Returns:
        list[STAGE] | None: None when the flag was not given (every stage runs), an
            empty list for an empty string
    """
    if stages is None:
        return None
    state.logger.info(f"Converting stages '{stages}' to STAGE enum")
    return convert_stages_list_to_enum(stages.split(","))


def convert_branch_to_enum(branch: str) -> BRANCH:
    try:
        return BRANCH(branch.lower())
    except ValueError as e:
        raise ConfigError(f"Invalid branch provided: {e}")


def convert_rig_to_enum(rig: str) -> SYNTHETIC_RIG:
    try:
        return SYNTHETIC_RIG(rig.lower())
    except ValueError as e:
        raise ConfigError(f"Invalid synthetic rig provided: {e}. Expected one of: {[r.value for r in SYNTHETIC_RIG]}")


def apply_overrides(cfg: RunConfig, seed: Optional[int] = None, policy: Optional[str] = None) -> RunConfig:
    """
    Apply --seed and --policy on top of a validated configuration.

    The seed drives both the training schedule and the synthetic rig.
    """
    if seed is not None:
        cfg = cfg.model_copy(update={
            "schedule": cfg.schedule.model_copy(update={"seed": seed}),
            "data": cfg.data.model_copy(update={"seed": seed}),
        })
    if policy is not None:
        cfg = cfg.model_copy(update={"densify": cfg.densify.model_copy(update={"policy": convert_policy_to_enum(policy)})})
    return cfg


def resolve_config(path: Optional[str], seed: Optional[int] = None, policy: Optional[str] = None) -> RunConfig:
    """
    Load --config (defaults when absent) and apply the overrides.

    Raises:
        ConfigError: On an unreadable or invalid configuration
    """
    cfg = load_run_config(path) if path else RunConfig()
    return apply_overrides(cfg, seed, policy)
