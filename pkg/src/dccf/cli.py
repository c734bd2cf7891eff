"""Command line interface.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import colorspace, imaging_io
from .assembly import run_pipeline
from .errors import ImageFormatError, NumericalError, StackFormatError
from .image import PlaneImage
from .interact import Adjustments
from .optimizer import FitConfig, FitReport, fit, synth_perturb

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


@click.group()
def cli() -> None:
    """Color-filter harmonization toolkit."""


@cli.command()
@click.argument("image_path", type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice(["standard", "smooth"]), default="standard")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
def decompose(image_path: str, mode: str, out_dir: str) -> None:
    """Write the V/S/H planes of an image as PNGs."""
    img = imaging_io.load_image(image_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if mode == "standard":
        hsv = colorspace.rgb_to_hsv(img)
        imaging_io.save_plane(hsv.v, out / "value.png")
        imaging_io.save_plane(hsv.s, out / "saturation.png")
        imaging_io.save_plane(PlaneImage(hsv.h.data / (2.0 * np.pi)), out / "hue.png")
    else:
        imaging_io.save_plane(colorspace.smooth_value_map(img), out / "value.png")
        imaging_io.save_plane(colorspace.smooth_saturation_map(img), out / "saturation.png")
        imaging_io.save_image(colorspace.smooth_hue_map(img), out / "hue.png")
    click.echo(f"wrote {mode} planes to {out}")


def report_to_json(report: FitReport) -> dict:
    def finite(x: float) -> float:
        return x if math.isfinite(x) else 1e9

    return {
        "final_mse": finite(report.final_mse),
        "final_psnr": finite(report.final_psnr),
        "iterations": report.iterations_run,
        "wall_time_s": report.wall_time,
        "loss_history": report.loss_history,
    }


@cli.command("fit")
@click.argument("composite_path", type=click.Path(dir_okay=False))
@click.argument("gt_path", type=click.Path(dir_okay=False))
@click.argument("mask_path", type=click.Path(dir_okay=False))
@click.option("--grid", type=click.IntRange(min=1), default=64, show_default=True)
@click.option(
    "--mode", type=click.Choice(["smooth", "standard", "rgb_only"]), default="smooth",
    show_default=True,
)
@click.option("--iters", type=click.IntRange(min=1), default=500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--step", type=float, default=None, help="Gradient step size override.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
def fit_cmd(
    composite_path: str, gt_path: str, mask_path: str, grid: int, mode: str,
    iters: int, seed: int, step: float | None, out_path: str, report_path: str | None,
) -> None:
    """Fit filter grids to a (composite, reference, mask) triple."""
    composite = imaging_io.load_image(composite_path)
    gt = imaging_io.load_image(gt_path)
    mask = imaging_io.load_mask(mask_path)
    if composite.data.shape != gt.data.shape:
        raise click.UsageError("composite and reference differ in size")
    if mask.data.shape != composite.data.shape[:2]:
        raise click.UsageError("mask does not match image size")
    kwargs = dict(
        grid_width=grid, grid_height=grid, mode=mode, max_iters=iters, seed=seed
    )
    if step is not None:
        kwargs["step"] = step
    cfg = FitConfig(**kwargs)
    stack, report = fit(composite, gt, mask, cfg)
    imaging_io.save_stack(stack, out_path)
    if report_path:
        payload = json.dumps(report_to_json(report), indent=2)
        imaging_io._atomic_write(Path(report_path), payload.encode())
    click.echo(
        f"fit finished: {report.iterations_run} iterations, "
        f"PSNR {report.final_psnr:.2f} dB, stack -> {out_path}"
    )


@cli.command("apply")
@click.argument("image_path", type=click.Path(dir_okay=False))
@click.argument("stack_path", type=click.Path(dir_okay=False))
@click.option("--stage", type=click.IntRange(1, 4), default=4, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def apply_cmd(image_path: str, stack_path: str, stage: int, out_path: str) -> None:
    """Apply a fitted stack to an image at its full resolution."""
    img = imaging_io.load_image(image_path)
    stack = imaging_io.load_stack(stack_path)
    trace = run_pipeline(img, stack)
    imaging_io.save_image(trace.stage(stage), out_path)
    click.echo(f"stage {stage} -> {out_path}")


@cli.command("adjust")
@click.argument("image_path", type=click.Path(dir_okay=False))
@click.argument("stack_path", type=click.Path(dir_okay=False))
@click.option("--hue-theta", type=click.FloatRange(0, 360), default=0.0)
@click.option("--hue-alpha", type=click.FloatRange(0, 1), default=0.0)
@click.option("--sat-sigma", type=click.FloatRange(-1, 1), default=0.0)
@click.option("--sat-alpha", type=click.FloatRange(0, 1), default=0.0)
@click.option("--val-curve", type=click.Path(dir_okay=False), default=None,
              help="JSON file with {v_min, phis}.")
@click.option("--val-alpha", type=click.FloatRange(0, 1), default=0.0)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def adjust_cmd(
    image_path: str, stack_path: str, hue_theta: float, hue_alpha: float,
    sat_sigma: float, sat_alpha: float, val_curve: str | None, val_alpha: float,
    out_path: str,
) -> None:
    """Blend user adjustments into a fitted stack and render the result."""
    img = imaging_io.load_image(image_path)
    stack = imaging_io.load_stack(stack_path)
    val_v_min, val_phi = 0.0, None
    if val_curve is not None:
        try:
            curve = json.loads(Path(val_curve).read_text())
            val_v_min = float(curve["v_min"])
            val_phi = tuple(float(p) for p in curve["phis"])
        except OSError as exc:
            raise ImageFormatError(f"cannot read {val_curve}: {exc}") from exc
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"invalid curve file {val_curve}: {exc}") from exc
    adjustments = Adjustments(
        hue_theta=hue_theta, hue_alpha=hue_alpha,
        sat_sigma=sat_sigma, sat_alpha=sat_alpha,
        val_v_min=val_v_min, val_phi=val_phi, val_alpha=val_alpha,
    )
    try:
        adjusted = adjustments.apply(stack)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    trace = run_pipeline(img, adjusted)
    imaging_io.save_image(trace.i4, out_path)
    click.echo(f"adjusted render -> {out_path}")


@cli.command("synth")
@click.argument("gt_path", type=click.Path(dir_okay=False))
@click.argument("mask_path", type=click.Path(dir_okay=False))
@click.option("--theta", type=float, default=0.0, help="Hue rotation in degrees.")
@click.option("--sigma", type=click.FloatRange(-1, 1), default=0.0)
@click.option("--gamma", type=float, default=1.0)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def synth_cmd(
    gt_path: str, mask_path: str, theta: float, sigma: float, gamma: float, out_path: str
) -> None:
    """Perturb the foreground of a reference image into a test composite."""
    gt = imaging_io.load_image(gt_path)
    mask = imaging_io.load_mask(mask_path)
    if mask.data.shape != gt.data.shape[:2]:
        raise click.UsageError("mask does not match image size")
    if gamma <= 0.0:
        raise click.UsageError("gamma must be positive")
    composite = synth_perturb(gt, mask, theta=np.deg2rad(theta), sigma=sigma, gamma=gamma)
    imaging_io.save_image(composite, out_path)
    click.echo(f"composite -> {out_path}")


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--session-dir", type=click.Path(file_okay=False), required=True)
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None)
@click.option("--cors-origin", default="*", show_default=True)
def serve_cmd(host: str, port: int, session_dir: str, ui_dir: str | None, cors_origin: str) -> None:
    """Start the interactive adjustment service."""
    import uvicorn

    from .service.app import create_app

    app = create_app(Path(session_dir), ui_dir=Path(ui_dir) if ui_dir else None,
                     cors_origins=[cors_origin])
    uvicorn.run(app, host=host, port=port)


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.UsageError as exc:
        exc.show()
        sys.exit(EXIT_USAGE)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except (ImageFormatError, StackFormatError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)


if __name__ == "__main__":
    main()
