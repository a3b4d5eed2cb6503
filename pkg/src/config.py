"""
Process configuration for the splatting engine.

This module loads environment variables (optionally from a .env file), validates
them and exposes a singleton configuration object. Run-level settings such as
render thresholds, densification policy or stage lengths do not live here: they
come from the JSON RunConfig document (see data_types/run_config.py). This module
only covers what belongs to the process that runs them.

Environment Variables:
    PGST_THREADS: Worker threads used for tile-parallel rendering (int >= 1, default 1)
    PGST_LOG_DIR: Directory for state snapshots and exception dumps (default "logs")
    PGST_PROGRESS: "1" to show tqdm progress bars, "0" to hide them (default "1")
    VERSION: Version string reported by the command line (default "1.0.0")
    MODE: "production" skips .env loading
"""

import os

try:
    from .global_state import state
    from .errors import ConfigError
except ImportError:
    from global_state import state
    from errors import ConfigError


class Config:
    """
    Configuration manager for the splatting engine process.

    Attributes:
        VERSION (str): Version string
        THREADS (int): Worker thread cap for tile parallelism
        LOG_DIR (str): Directory for state snapshots
        PROGRESS (bool): Whether tqdm bars are shown
    """

    def __init__(self):
        """
        Initialize the Config instance with defaults usable before load().
        """
        self.VERSION = "1.0.0"
        self.THREADS = 1
        self.LOG_DIR = "logs"
        self.PROGRESS = True
        self.loaded = False

    def load(self):
        """
        Load and validate all configuration settings from environment variables.

        Raises:
            ConfigError: If a variable holds a value of the wrong type or range

        Note:
            A missing .env file is not an error; the process environment and the
            defaults are used instead.
        """
        if os.getenv("MODE") != "production":
            from dotenv import load_dotenv
            if not load_dotenv():
                state.logger.debug("No .env file found, using process environment only.")

        self.VERSION = os.getenv("VERSION", "1.0.0")
        self.THREADS = parse_int_env("PGST_THREADS", 1, minimum=1)
        self.LOG_DIR = os.getenv("PGST_LOG_DIR", "logs")
        progress = os.getenv("PGST_PROGRESS", "1")
        if progress not in ("0", "1"):
            state.logger.error(f"PGST_PROGRESS must be 0 or 1, got '{progress}'")
            raise ConfigError(f"PGST_PROGRESS must be 0 or 1, got '{progress}'")
        self.PROGRESS = progress == "1"

        assert_env_vars(
            ("VERSION", self.VERSION),
            ("PGST_THREADS", self.THREADS),
            ("PGST_LOG_DIR", self.LOG_DIR),
        )
        self.loaded = True
        state.logger.info(f"Configuration loaded: threads={self.THREADS}, log_dir={self.LOG_DIR}")


def parse_int_env(name: str, default: int, minimum: int = None) -> int:
    """
    Read an integer environment variable.

    Args:
        name (str): Variable name
        default (int): Value used when the variable is unset or empty
        minimum (int, optional): Smallest accepted value

    Returns:
        int: Parsed value

    Raises:
        ConfigError: If the value is not an integer or is below the minimum
    """
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        state.logger.error(f"{name} must be an integer, got '{raw}'")
        raise ConfigError(f"{name} must be an integer, got '{raw}'")
    if minimum is not None and value < minimum:
        state.logger.error(f"{name} must be >= {minimum}, got {value}")
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def assert_env_vars(*vars):
    """
    Validate that all required configuration values are set and not empty.

    Args:
        *vars: Tuples of (name, value)

    Raises:
        ConfigError: If any value is None, empty, or otherwise falsy
    """
    for var in vars:
        if not var[1]:
            raise ConfigError(f"Missing required environment variable: {var[0]}")


# Create a singleton configuration instance for use throughout the application
config = Config()
