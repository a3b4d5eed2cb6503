"""
Main Entry Point for the splatting engine command line.

This module is the process entry point: it loads the process configuration and the
global state, hands the arguments to the click command group and turns whatever the
command raised into an exit code.

Functions:
    setup(): Load configuration and state persistence
    run(argv): Execute one command and return its exit code

Exit codes:
    0 - success
    1 - unexpected failure (or a failed gradient check)
    2 - input or validation failure (bad config, corrupt file, unknown policy, ...)
    3 - numerical failure (training diverged)

Usage:
    python src/main.py fit --config run.json --targets data/ --out ckpt/
    python src/main.py render --checkpoint ckpt/ --config run.json --out head.png

Environment Variables:
    See config.py (PGST_THREADS, PGST_LOG_DIR, PGST_PROGRESS, VERSION, MODE).
"""
import sys
from typing import Optional

import click

from config import config
from global_state import state
from errors import exit_code_for, EXIT_INPUT
from app import APP


def setup():
    """
    Load the process configuration and enable state persistence.

    Raises:
        ConfigError: If an environment variable holds an invalid value
    """
    config.load()
    state.load(config.LOG_DIR)
    state.update_flag("configInitialized")


def run(argv: Optional[list[str]] = None) -> int:
    """
    Run one command.

    Args:
        argv (list[str], optional): Arguments without the program name; sys.argv[1:] by default

    Returns:
        int: Process exit code
    """
    args = sys.argv[1:] if argv is None else list(argv)
    try:
        setup()
        code = APP.main(args=args, prog_name="pgst", standalone_mode=False)
        return code if isinstance(code, int) else 0
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return EXIT_INPUT
    except Exception as e:
        state.log_exception(e, context=f"command: {' '.join(args)}")
        click.echo(f"Error: {e}", err=True)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(run())
