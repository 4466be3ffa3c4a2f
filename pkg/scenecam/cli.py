"""
scenecam command line: extract, enhance, train, evaluate, cam, synth, bench
and experiment.

Exit codes: 0 success, 2 usage, 3 I/O, 4 data / shape / parameter errors.
Failures print one `error code=... exit=... message="..."` line on stderr.
"""

import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import click
import cv2
import numpy as np

from scenecam import __version__
from scenecam.config import settings
from scenecam.errors import ParameterError, ShapeError
from scenecam.schemas.features import EnhanceKind, StftConfig
from scenecam.schemas.synth import SynthConfig
from scenecam.schemas.training import TrainConfig
from scenecam.services.benchmark import DEFAULT_IMAGES, bench_preprocess, format_bench
from scenecam.services.cam import (
    cam_gap,
    default_cam_layer,
    event_activation_report,
    grad_cam,
    render_map_overlay,
    render_overlay,
    resolve_layer,
    sample_cam,
)
from scenecam.services.data import load_dcase_index, make_synth
from scenecam.services.dsp import (
    LogMelImage,
    apply_norm,
    extract_segments,
    load_wav,
    segment_hop_frames,
    stitch_frames,
)
from scenecam.services.enhance import enhance as enhance_image
from scenecam.services.evaluation import evaluate as evaluate_split
from scenecam.services.evaluation import check_sample_rate, prepare_training, resolve_threads, run_grid
from scenecam.services.features import load_feature, load_stats, save_feature, save_stats
from scenecam.services.monitoring import write_metrics
from scenecam.services.nn.builders import ARCHS, build_arch
from scenecam.services.nn.checkpoint import load_checkpoint, meta_for, save_checkpoint
from scenecam.services.nn.network import NetworkState
from scenecam.services.nn.training import predict_sample, train as train_network
from scenecam.services.rendering import feature_panel, grayscale_raster, save_png
from scenecam.utils.error_reporting import EXIT_USAGE, error_reporter
from scenecam.utils.file_context import staged_files, write_text_atomic

logger = logging.getLogger("scenecam")

KIND_CHOICES = [k.value for k in EnhanceKind]


@dataclass
class CliState:
    seed: int
    threads: int
    metrics_out: Path | None


def _pair(value: str, sep: str, what: str) -> tuple[int, int]:
    parts = value.lower().split(sep)
    try:
        a, b = (int(p) for p in parts)
    except ValueError:
        raise click.BadParameter(f"expected {what}, got {value!r}")
    return a, b


def parse_kernel(ctx: click.Context, param: click.Parameter, value: str | tuple[str, ...] | None):
    if value is None:
        return None
    if isinstance(value, tuple):
        return tuple(_pair(v, ",", "T,F") for v in value)
    return _pair(value, ",", "T,F")


def parse_shape(ctx: click.Context, param: click.Parameter, value: str) -> tuple[int, int]:
    return _pair(value, "x", "TxM")


def stats_path_for(ckpt: Path) -> Path:
    return ckpt.with_name(ckpt.name + ".stats")


def _seed(ctx: click.Context, seed: int | None) -> int:
    return ctx.obj.seed if seed is None else seed


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="scenecam")
@click.option("--seed", type=int, default=0, show_default=True, help="Default seed for subcommands")
@click.option("--threads", default=settings.threads, show_default=True, help="'1' (bit-reproducible) or 'auto'")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.option("--metrics-out", type=click.Path(dir_okay=False, path_type=Path), help="Write Prometheus metrics here")
@click.pass_context
def cli(ctx: click.Context, seed: int, threads: str, verbose: bool, metrics_out: Path | None):
    """Acoustic scene classification with CAM / Grad-CAM visualization"""
    logging.basicConfig(
        level=logging.DEBUG if verbose else settings.log_level.upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    n_threads = resolve_threads(threads)
    if n_threads == 1:
        cv2.setNumThreads(1)
    ctx.obj = CliState(seed=seed, threads=n_threads, metrics_out=metrics_out)


@cli.result_callback()
@click.pass_context
def _write_metrics(ctx: click.Context, result: object, **_: object):
    if ctx.obj.metrics_out is not None:
        write_metrics(ctx.obj.metrics_out)
        logger.debug(f"Metrics written to {ctx.obj.metrics_out}")


# -- features ----------------------------------------------------------------


@cli.command()
@click.argument("wav", type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path))
def extract(wav: Path, out_dir: Path):
    """Cut a recording into 1 s segments and write one log-Mel feature file per segment"""
    images = extract_segments(load_wav(wav), StftConfig())
    with staged_files(out_dir) as staging:
        for i, img in enumerate(images):
            save_feature(img, staging / f"{wav.stem}_{i:03d}.slns")
    click.echo(f"segments={len(images)} shape={images[0].T}x{images[0].M} out={out_dir}")


@cli.command()
@click.argument("feature", type=click.Path(path_type=Path))
@click.option("--kind", type=click.Choice(KIND_CHOICES), required=True)
@click.option("--median-kernel", default="51,7", show_default=True, callback=parse_kernel, help="T,F")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Enhanced feature file")
@click.option("--png", type=click.Path(dir_okay=False, path_type=Path), help="Grayscale raster of the result")
@click.option("--panel", type=click.Path(dir_okay=False, path_type=Path), help="All kinds side by side")
def enhance(feature: Path, kind: str, median_kernel: tuple[int, int], out: Path | None, png: Path | None, panel: Path | None):
    """Apply DoG, Sobel or median-residual enhancement to a feature file"""
    img = load_feature(feature)
    result = enhance_image(img, kind, median_kernel)
    if out is not None:
        save_feature(result, out)
    if png is not None:
        save_png(grayscale_raster(result.values), png)
    if panel is not None:
        images = [enhance_image(img, k, median_kernel).values for k in EnhanceKind]
        save_png(feature_panel(images), panel)
    click.echo(f"kind={kind} shape={result.T}x{result.M} min={result.values.min():.6g} max={result.values.max():.6g}")


# -- model -------------------------------------------------------------------


@cli.command()
@click.option("--corpus", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--arch", type=click.Choice(ARCHS), default="gap", show_default=True)
@click.option("--kind", "--feature-kind", "kind", type=click.Choice(KIND_CHOICES), default="logmel", show_default=True)
@click.option("--epochs", type=int, default=30, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--width", type=float, default=1.0, show_default=True, help="Channel multiplier")
@click.option("--fc-dim", type=int, help="Hidden width of CNN-FC")
@click.option("--seed", type=int)
@click.option("--split", default="train", show_default=True)
@click.option("--median-kernel", default="51,7", show_default=True, callback=parse_kernel)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
def train(
    ctx: click.Context,
    corpus: Path,
    arch: str,
    kind: str,
    epochs: int,
    lr: float,
    batch_size: int,
    width: float,
    fc_dim: int | None,
    seed: int | None,
    split: str,
    median_kernel: tuple[int, int],
    out: Path,
):
    """Train a classifier on a corpus split; writes the checkpoint and <out>.stats"""
    seed = _seed(ctx, seed)
    cfg = TrainConfig(lr=lr, epochs=epochs, batch_size=batch_size, seed=seed)
    stft = StftConfig()
    index = load_dcase_index(corpus)
    data, stats, sample_rate = prepare_training(index, kind, stft, median_kernel, ctx.obj.threads, split)
    _, c, t, m = data.x.shape
    net = build_arch(arch, len(index.label_set), (c, t, m), seed=seed, width=width, labels=index.label_set, fc_dim=fc_dim)
    log = train_network(net, data, cfg)

    meta = meta_for(net, feature_kind=EnhanceKind.parse(kind), stft=stft, sample_rate=sample_rate)
    save_checkpoint(net, out, meta)
    try:
        save_stats(stats, stats_path_for(out))
    except BaseException:
        out.unlink(missing_ok=True)
        raise
    click.echo(f"arch={arch} kind={kind} segments={len(data)} parameters={net.n_parameters()}")
    click.echo(f"final_loss={log.final_loss!r} out={out}")


def _load_model(ckpt: Path, stats: Path | None):
    net, meta = load_checkpoint(ckpt)
    norm = load_stats(stats or stats_path_for(ckpt))
    return net, meta, norm


@cli.command()
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--corpus", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--split", default="eval", show_default=True)
@click.option("--stats", type=click.Path(dir_okay=False, path_type=Path), help="Defaults to <ckpt>.stats")
@click.option("--median-kernel", default="51,7", show_default=True, callback=parse_kernel)
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), help="key=value report file")
@click.pass_context
def evaluate(
    ctx: click.Context,
    ckpt: Path,
    corpus: Path,
    split: str,
    stats: Path | None,
    median_kernel: tuple[int, int],
    report: Path | None,
):
    """Evaluate a checkpoint on a corpus split"""
    net, meta, norm = _load_model(ckpt, stats)
    index = load_dcase_index(corpus)
    result = evaluate_split(
        net, index, split, meta.feature_kind, norm, meta.stft, median_kernel, ctx.obj.threads, meta.sample_rate
    )
    click.echo(result.format_table())
    if report is not None:
        write_text_atomic(report, "\n".join(result.to_records()) + "\n")


def _class_id(net: NetworkState, target: str, scores: np.ndarray) -> int:
    if target == "argmax":
        return int(np.argmax(scores))
    if target in net.labels:
        return net.labels.index(target)
    if target.isdigit() and int(target) < net.n_classes:
        return int(target)
    raise ParameterError(f"unknown class {target!r} (labels: {net.labels or list(range(net.n_classes))})")


@cli.command()
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--wav", type=click.Path(dir_okay=False, path_type=Path), help="Whole recording, segments stitched")
@click.option("--feature", type=click.Path(dir_okay=False, path_type=Path), help="One log-Mel segment")
@click.option("--class", "target", default="argmax", show_default=True, help="Scene label, class index or argmax")
@click.option("--layer", type=int, help="Trunk row (1-8); defaults to row 7")
@click.option("--method", type=click.Choice(["gradcam", "cam"]), default="gradcam", show_default=True)
@click.option("--stats", type=click.Path(dir_okay=False, path_type=Path), help="Defaults to <ckpt>.stats")
@click.option("--alpha", type=float, default=settings.overlay_alpha, show_default=True)
@click.option("--median-kernel", default="51,7", show_default=True, callback=parse_kernel)
@click.option("--png", required=True, type=click.Path(dir_okay=False, path_type=Path))
def cam(
    ckpt: Path,
    wav: Path | None,
    feature: Path | None,
    target: str,
    layer: int | None,
    method: str,
    stats: Path | None,
    alpha: float,
    median_kernel: tuple[int, int],
    png: Path,
):
    """Render a signed class activation overlay"""
    if (wav is None) == (feature is None):
        raise click.UsageError("give exactly one of --wav or --feature")
    net, meta, norm = _load_model(ckpt, stats)
    layer_index = resolve_layer(net, layer) if layer is not None else default_cam_layer(net)

    if wav is not None:
        if method == "cam":
            raise click.UsageError("--method cam works on single segments; use --feature")
        wave = load_wav(wav)
        check_sample_rate(meta.sample_rate, [wave.sample_rate], str(wav))
        raw = extract_segments(wave, meta.stft)
        inputs = [apply_norm(enhance_image(img, meta.feature_kind, median_kernel), norm) for img in raw]
        class_id = _class_id(net, target, predict_sample(net, inputs))
        hop = segment_hop_frames(meta.stft)
        activation = sample_cam(net, inputs, class_id, layer_index, hop)
        base = stitch_frames([img.values for img in inputs], hop)
        overlay = render_map_overlay(base, activation, alpha)
        energy = LogMelImage(stitch_frames([img.values for img in raw], hop))
        activity = event_activation_report(energy, activation)
    else:
        raw_img = load_feature(feature)
        img = apply_norm(enhance_image(raw_img, meta.feature_kind, median_kernel), norm)
        if img.shape != tuple(net.input_shape[1:]):
            raise ShapeError(f"feature is {img.shape} but the network expects {net.input_shape[1:]}")
        scores = net.forward(img.values[np.newaxis], retain=True)
        class_id = _class_id(net, target, scores)
        result = cam_gap(net, class_id) if method == "cam" else grad_cam(net, class_id, layer_index)
        net.clear()
        overlay = render_overlay(img, result, alpha)
        activity = event_activation_report(raw_img, result)

    save_png(overlay.rgb, png)
    label = net.labels[class_id] if class_id < len(net.labels) else str(class_id)
    click.echo(f"class={label} layer={layer_index} size={overlay.width}x{overlay.height} png={png}")
    for record in activity.to_records():
        click.echo(record)


# -- data --------------------------------------------------------------------


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--classes", type=int, default=4, show_default=True)
@click.option("--per-class", type=int, default=60, show_default=True)
@click.option("--duration", type=float, default=10.0, show_default=True, help="Seconds per recording")
@click.option("--sample-rate", type=int, default=22050, show_default=True)
@click.option("--event-rate", type=float, default=2.0, show_default=True, help="Mean events per recording")
@click.option("--eval-fraction", type=float, default=1.0 / 3.0, show_default=True)
@click.option("--seed", type=int)
@click.pass_context
def synth(
    ctx: click.Context,
    out_dir: Path,
    classes: int,
    per_class: int,
    duration: float,
    sample_rate: int,
    event_rate: float,
    eval_fraction: float,
    seed: int | None,
):
    """Generate the synthetic texture-vs-event corpus"""
    cfg = SynthConfig(
        n_classes=classes,
        samples_per_class=per_class,
        sample_s=duration,
        sample_rate=sample_rate,
        event_rate=event_rate,
        eval_fraction=eval_fraction,
        seed=_seed(ctx, seed),
    )
    index = make_synth(cfg, out_dir)
    counts = {name: len(index.split(name)) for name in index.splits}
    click.echo(f"recordings={len(index.entries)} classes={len(index.label_set)} " + " ".join(f"{k}={v}" for k, v in counts.items()))


@cli.command()
@click.option("--images", type=int, default=DEFAULT_IMAGES, show_default=True)
@click.option("--shape", default="1000x128", show_default=True, callback=parse_shape, help="TxM")
@click.option("--kind", "kinds", multiple=True, type=click.Choice(KIND_CHOICES), help="Repeatable; default dog, sobel, median")
@click.option("--median-kernel", "median_kernels", multiple=True, callback=parse_kernel, help="Repeatable T,F; default 51,7")
@click.option("--repeats", type=int, default=3, show_default=True)
@click.pass_context
def bench(ctx: click.Context, images: int, shape: tuple[int, int], kinds: Sequence[str], median_kernels, repeats: int):
    """Time the enhancement filters on random images (single thread)"""
    timings = bench_preprocess(
        shape=shape,
        n_images=images,
        kinds=kinds or ("dog", "sobel", "median"),
        median_kernels=median_kernels or ((51, 7),),
        repeats=repeats,
        seed=ctx.obj.seed,
    )
    for line in format_bench(timings, shape, images):
        click.echo(line)


@cli.command()
@click.option("--corpus", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--arch", "archs", multiple=True, type=click.Choice(ARCHS), help="Repeatable; default fc and gap")
@click.option("--kind", "kinds", multiple=True, type=click.Choice(KIND_CHOICES), help="Repeatable; default all")
@click.option("--trials", type=int, default=3, show_default=True)
@click.option("--epochs", type=int, default=30, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--width", type=float, default=1.0, show_default=True)
@click.option("--fc-dim", type=int)
@click.option("--median-kernel", default="51,7", show_default=True, callback=parse_kernel)
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), help="key=value report file")
@click.pass_context
def experiment(
    ctx: click.Context,
    corpus: Path,
    archs: Sequence[str],
    kinds: Sequence[str],
    trials: int,
    epochs: int,
    lr: float,
    batch_size: int,
    width: float,
    fc_dim: int | None,
    median_kernel: tuple[int, int],
    report: Path | None,
):
    """Accuracy grid over feature kinds x architectures, averaged over trials"""
    cfg = TrainConfig(lr=lr, epochs=epochs, batch_size=batch_size, seed=ctx.obj.seed)
    grid = run_grid(
        load_dcase_index(corpus),
        archs or ARCHS,
        kinds or KIND_CHOICES,
        cfg,
        trials=trials,
        width=width,
        fc_dim=fc_dim,
        median_kernel=median_kernel,
        threads=ctx.obj.threads,
    )
    click.echo(grid.format_table())
    if report is not None:
        write_text_atomic(report, "\n".join(grid.to_records()) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    if not args:
        with click.Context(cli, info_name="scenecam") as ctx:
            click.echo(cli.get_help(ctx), err=True)
        return EXIT_USAGE
    try:
        result = cli.main(args=args, prog_name="scenecam", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except Exception as e:
        return error_reporter.report(e).exit_code
    return result if isinstance(result, int) else 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
