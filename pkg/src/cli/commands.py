"""
Click command definitions.

Commands only parse and convert their flags, then hand off to runner.cmd_*. Errors
propagate to main.run, which logs them and maps them to exit codes.
"""

import click

from global_state import state
from logic.gradcheck import SUITES
from runner import (
    cmd_animate, cmd_bench, cmd_compare_densify, cmd_fit, cmd_gradcheck, cmd_render, cmd_stats, cmd_synth,
    RENDER_BRANCHES,
)
from cli.helpers import convert_branch_to_enum, convert_rig_to_enum, convert_stages_str_to_enum, resolve_config


def config_options(fn):
    """--config and --seed, shared by every command."""
    fn = click.option("--seed", type=int, default=None, help="Override schedule.seed and data.seed")(fn)
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                      help="JSON run configuration (defaults apply when omitted)")(fn)
    return fn


@click.command("fit")
@config_options
@click.option("--targets", type=click.Path(), default=None, help="Targets directory (overrides data.targets)")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Checkpoint directory")
@click.option("--policy", type=click.Choice(["baseline", "pixel-aware"]), default=None, help="Densify policy")
@click.option("--stage", "stages", default=None, help="Comma-separated stages: static,deform,finetune")
def fit(config_path, seed, targets, out, policy, stages):
    """Fit a scene and write a checkpoint directory."""
    cfg = resolve_config(config_path, seed, policy)
    result = cmd_fit(cfg, out, targets=targets, stages=convert_stages_str_to_enum(stages))
    final = result.final
    if final is not None:
        click.echo(f"PSNR={final.psnr:.2f} dB SSIM={final.ssim:.4f} N={final.n}")
    click.echo(f"Checkpoint written to {out}")


@click.command("render")
@config_options
@click.option("--checkpoint", required=True, type=click.Path(), help="Checkpoint directory or model.pgsw")
@click.option("--features", "features_path", type=click.Path(dir_okay=False), default=None,
              help="PGSF feature file; omit to render the canonical clouds")
@click.option("--frame", "frame_index", type=int, default=0, help="Feature frame to render")
@click.option("--branch", type=click.Choice(list(RENDER_BRANCHES)), default="auto")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output PNG")
def render(config_path, seed, checkpoint, features_path, frame_index, branch, out):
    """Render a checkpoint from the configured camera."""
    cfg = resolve_config(config_path, seed)
    cmd_render(cfg, checkpoint, out, features_path, frame_index, branch)
    click.echo(f"Wrote {out}")


@click.command("animate")
@config_options
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--features", "features_path", required=True, type=click.Path(dir_okay=False))
@click.option("--start", type=int, default=0)
@click.option("--count", type=int, default=None)
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Directory for frame_XXXX.png")
def animate(config_path, seed, checkpoint, features_path, start, count, out):
    """Render one numbered PNG per feature frame."""
    cfg = resolve_config(config_path, seed)
    paths = cmd_animate(cfg, checkpoint, features_path, out, start, count)
    click.echo(f"Wrote {len(paths)} frames to {out}")


@click.command("compare-densify")
@config_options
@click.option("--targets", type=click.Path(), default=None)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--stage", "stages", default=None, help="Stages to run for both policies (default: static)")
def compare_densify(config_path, seed, targets, out, stages):
    """Fit twice, once per densify policy, and report both runs."""
    cfg = resolve_config(config_path, seed)
    report = cmd_compare_densify(cfg, out, targets=targets, stages=convert_stages_str_to_enum(stages))
    click.echo(report.to_string(index=False))


@click.command("gradcheck")
@config_options
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Optional CSV report")
@click.option("--instances", type=int, default=20, show_default=True)
@click.option("--suite", "suites", multiple=True, type=click.Choice(list(SUITES)), help="Restrict to suites")
@click.option("--fault", type=click.Choice(list(SUITES)), default=None, hidden=True)
@click.pass_context
def gradcheck(ctx, config_path, seed, out, instances, suites, fault):
    """Finite-difference check of every analytic gradient."""
    cfg = resolve_config(config_path, seed)
    report = cmd_gradcheck(cfg, out, instances, tuple(suites) or None, fault)
    click.echo(report.text())
    if not report.passed:
        state.logger.error("Gradient check failed")
        ctx.exit(1)


@click.command("stats")
@config_options
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--targets", type=click.Path(), default=None,
              help="Accumulate densify stats over these frames; omit for a forward-only dump of index, valid, R, m")
@click.option("--branch", type=click.Choice(["face", "mouth"]), default="face")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def stats(config_path, seed, checkpoint, targets, branch, out):
    """Dump per-Gaussian densification statistics."""
    cfg = resolve_config(config_path, seed)
    table = cmd_stats(cfg, checkpoint, out, targets, convert_branch_to_enum(branch))
    click.echo(f"Wrote {len(table)} rows to {out}")


@click.command("bench")
@config_options
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--features", "features_path", type=click.Path(dir_okay=False), default=None)
@click.option("--frames", type=int, default=20, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def bench(config_path, seed, checkpoint, features_path, frames, out):
    """Measure rendering speed."""
    cfg = resolve_config(config_path, seed)
    result = cmd_bench(cfg, checkpoint, features_path, frames, out)
    click.echo(f"{result.ms_per_frame:.2f} ms/frame ({result.fps:.1f} FPS)")


@click.command("synth")
@config_options
@click.option("--rig", required=True, type=click.Choice(["blobs", "stripe", "talking"]))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def synth(config_path, seed, rig, out):
    """Write a synthetic targets directory."""
    cfg = resolve_config(config_path, seed)
    dataset = cmd_synth(cfg, convert_rig_to_enum(rig), out)
    click.echo(f"Wrote {len(dataset.frames)} frames to {out}")


COMMANDS = [fit, render, animate, compare_densify, gradcheck, stats, bench, synth]
