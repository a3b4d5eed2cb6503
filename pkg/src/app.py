import click

from config import config
from cli.commands import COMMANDS


@click.group(name="pgst")
@click.version_option(version=config.VERSION, prog_name="pgst")
def APP():
    """Pixel-aware Gaussian splatting for audio-driven talking heads."""


for command in COMMANDS:
    APP.add_command(command)
