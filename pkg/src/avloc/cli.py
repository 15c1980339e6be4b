"""Command-line surface: manifest-driven evaluation, retrieval, mining,
loss/gradient checks, benchmark generation, and the toy training loop.

Reports are JSON (stdout or --out), with the full effective configuration
embedded; per-sample tables go to --csv on the commands that have them.
Exit codes: 0 success, 1 data/validation error, 2 usage error.
"""

import csv
import json
import sys
from pathlib import Path

import click

from . import bench, gradcheck, manifest as manifest_mod, metrics, mining, retrieval, tensorio, train
from .errors import AvlocError
from .loss import ContrastiveConfig, multi_positive_loss
from .parallel import resolve_threads

REPORT_VERSION = 1


def _load_config_file(path):
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise AvlocError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise AvlocError(f"config {path} must hold a JSON object")
    return raw


def _metric_config(config_file: dict) -> metrics.MetricConfig:
    return metrics.MetricConfig(**config_file.get("metrics", {}))


def _loss_config(config_file: dict, **overrides) -> ContrastiveConfig:
    merged = dict(config_file.get("loss", {}))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return ContrastiveConfig(**merged)


def _emit(report: dict, out):
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


def _write_csv(path, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        for row in rows:
            writer.writerow(row)


def _report_skeleton(command: str, seed: int, threads: int, config_file: dict) -> dict:
    return {
        "report_version": REPORT_VERSION,
        "command": command,
        "seed": seed,
        "threads": threads,
        "config_file": config_file,
    }


def common_options(f):
    f = click.option("--out", type=click.Path(dir_okay=False), default=None,
                     help="Write the JSON report here instead of stdout.")(f)
    f = click.option("--seed", type=int, default=0, show_default=True)(f)
    f = click.option("--threads", type=int, default=None,
                     help="Worker threads (default: AVLOC_THREADS or all cores).")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="JSON file with 'metrics' / 'loss' convention overrides.")(f)
    return f


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except AvlocError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)


@click.group(cls=_Group, context_settings={"help_option_names": ["-h", "--help"]})
def main():
    """Audio-visual localization toolkit."""


@main.command("eval")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(dir_okay=False))
@click.option("--metric", type=click.Choice(["ciou", "adaptive-ciou", "both"]), default="both",
              show_default=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the per-sample IoU table as CSV.")
@common_options
def eval_cmd(manifest_path, metric, csv_path, out, seed, threads, config_path):
    """Standard localization metrics (cIoU / adaptive cIoU / AUC) over a manifest."""
    config_file = _load_config_file(config_path)
    cfg = _metric_config(config_file)
    threads = resolve_threads(threads)
    mani = manifest_mod.load_manifest(manifest_path)
    samples = manifest_mod.manifest_samples(mani)
    report_data = metrics.evaluate(samples, metric=metric, cfg=cfg, threads=threads)
    report = _report_skeleton("eval", seed, threads, config_file)
    report.update({
        "dataset": mani.dataset,
        "num_samples": len(report_data.per_sample),
        "metrics": report_data.aggregates,
        "metric_config": report_data.config,
    })
    if csv_path:
        _write_csv(csv_path, report_data.csv_rows())
    _emit(report, out)


@main.command("eval-interactive")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(dir_okay=False))
@click.option("--variant", type=click.Choice(["ciou", "adaptive", "both"]), default="both",
              show_default=True)
@common_options
def eval_interactive_cmd(manifest_path, variant, out, seed, threads, config_path):
    """Interactive metrics: all sources of an image must be localized."""
    config_file = _load_config_file(config_path)
    cfg = _metric_config(config_file)
    threads = resolve_threads(threads)
    mani = manifest_mod.load_manifest(manifest_path)
    samples = [s for s in manifest_mod.manifest_samples(mani) if s.positive]
    results = {}
    variants = ("ciou", "adaptive") if variant == "both" else (variant,)
    for var in variants:
        res = metrics.interactive_iou(samples, variant=var, cfg=cfg, threads=threads)
        key = "" if var == "ciou" else "_adaptive"
        results[f"iiou{key}"] = res.iiou
        results[f"iauc{key}"] = res.iauc
        results[f"num_groups{key}"] = len(res.group_ious)
    report = _report_skeleton("eval-interactive", seed, threads, config_file)
    report.update({"dataset": mani.dataset, "metrics": results, "metric_config": cfg.to_dict()})
    _emit(report, out)


@main.command("eval-extended")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(dir_okay=False))
@common_options
def eval_extended_cmd(manifest_path, out, seed, threads, config_path):
    """Detection metrics (AP, max-F1, LocAcc) over positive and negative pairs."""
    config_file = _load_config_file(config_path)
    cfg = _metric_config(config_file)
    threads = resolve_threads(threads)
    mani = manifest_mod.load_manifest(manifest_path)
    samples = manifest_mod.manifest_samples(mani)
    res = metrics.extended_metrics(samples, cfg=cfg, threads=threads)
    report = _report_skeleton("eval-extended", seed, threads, config_file)
    report.update({
        "dataset": mani.dataset,
        "metrics": {
            "ap": res.ap,
            "max_f1": res.max_f1,
            "loc_acc": res.loc_acc,
            "degenerate_balance": res.degenerate_balance,
            "num_positive": res.num_positive,
            "num_negative": res.num_negative,
        },
        "metric_config": cfg.to_dict(),
    })
    _emit(report, out)


@main.command("eval-seg")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(dir_okay=False))
@click.option("--variant", type=click.Choice(["fraction", "adaptive", "both"]), default="both",
              show_default=True)
@common_options
def eval_seg_cmd(manifest_path, variant, out, seed, threads, config_path):
    """Segmentation metrics (mIoU, F-score) against ground-truth masks."""
    config_file = _load_config_file(config_path)
    cfg = _metric_config(config_file)
    threads = resolve_threads(threads)
    mani = manifest_mod.load_manifest(manifest_path)
    samples = [s for s in manifest_mod.manifest_samples(mani) if s.positive]
    results = {}
    variants = ("fraction", "adaptive") if variant == "both" else (variant,)
    for var in variants:
        res = metrics.segmentation_metrics(samples, variant=var, cfg=cfg, threads=threads)
        key = "" if var == "fraction" else "_adaptive"
        results[f"miou{key}"] = res.miou
        results[f"fscore{key}"] = res.fscore
    report = _report_skeleton("eval-seg", seed, threads, config_file)
    report.update({"dataset": mani.dataset, "metrics": results, "metric_config": cfg.to_dict()})
    _emit(report, out)


def _load_paired_pools(visual_prefix, audio_prefix):
    vis_ids, vis_vectors, _ = tensorio.load_pool(visual_prefix)
    aud_ids, aud_vectors, _ = tensorio.load_pool(audio_prefix)
    if vis_ids != aud_ids:
        raise AvlocError("visual and audio pools are not aligned: ids differ")
    return vis_ids, retrieval.RetrievalPool(vis_vectors, aud_vectors)


@main.command("retrieve")
@click.option("--visual-pool", required=True, type=click.Path(dir_okay=False))
@click.option("--audio-pool", required=True, type=click.Path(dir_okay=False))
@click.option("--direction", type=click.Choice(list(retrieval.DIRECTIONS) + ["both"]),
              default="both", show_default=True)
@click.option("--ks", default="1,5,10", show_default=True, help="Comma-separated recall cutoffs.")
@common_options
def retrieve_cmd(visual_pool, audio_pool, direction, ks, out, seed, threads, config_path):
    """Cross-modal recall@k over a paired embedding pool."""
    config_file = _load_config_file(config_path)
    threads = resolve_threads(threads)
    ks_list = [int(k) for k in ks.split(",") if k.strip()]
    _, pool = _load_paired_pools(visual_pool, audio_pool)
    results = {}
    directions = retrieval.DIRECTIONS if direction == "both" else (direction,)
    for d in directions:
        recalls = retrieval.recall_at_k(pool, d, ks_list)
        results[d] = {f"recall@{k}": v for k, v in recalls.items()}
    report = _report_skeleton("retrieve", seed, threads, config_file)
    report.update({"num_pairs": len(pool), "ks": ks_list, "metrics": results})
    _emit(report, out)


@main.command("compose")
@click.option("--visual-pool", required=True, type=click.Path(dir_okay=False))
@click.option("--audio-pool", required=True, type=click.Path(dir_okay=False))
@click.option("--visual-id", required=True)
@click.option("--audio-id", required=True)
@click.option("--lam", type=float, default=0.5, show_default=True,
              help="Interpolation weight on the visual component.")
@click.option("--k", type=int, default=5, show_default=True)
@common_options
def compose_cmd(visual_pool, audio_pool, visual_id, audio_id, lam, k, out, seed, threads, config_path):
    """Compositional retrieval with an interpolated audio-visual query."""
    config_file = _load_config_file(config_path)
    threads = resolve_threads(threads)
    ids, pool = _load_paired_pools(visual_pool, audio_pool)
    lookup = {sid: i for i, sid in enumerate(ids)}
    if visual_id not in lookup:
        raise AvlocError(f"unknown visual id {visual_id!r}")
    if audio_id not in lookup:
        raise AvlocError(f"unknown audio id {audio_id!r}")
    ranked = retrieval.compositional_retrieve(
        pool, pool.visual[lookup[visual_id]], pool.audio[lookup[audio_id]], lam, k
    )
    report = _report_skeleton("compose", seed, threads, config_file)
    report.update({
        "lam": lam,
        "k": k,
        "visual_id": visual_id,
        "audio_id": audio_id,
        "ranked_ids": [ids[i] for i in ranked],
    })
    _emit(report, out)


@main.command("align-report")
@click.option("--visual-pool", required=True, type=click.Path(dir_okay=False))
@click.option("--audio-pool", required=True, type=click.Path(dir_okay=False))
@common_options
def align_report_cmd(visual_pool, audio_pool, out, seed, threads, config_path):
    """Alignment / magnitude diagnostics of a paired pool."""
    config_file = _load_config_file(config_path)
    threads = resolve_threads(threads)
    _, pool = _load_paired_pools(visual_pool, audio_pool)
    res = retrieval.alignment_magnitude(pool)
    report = _report_skeleton("align-report", seed, threads, config_file)
    report.update({"metrics": res.to_dict()})
    _emit(report, out)


@main.command("mine")
@click.option("--pool", "pool_prefix", required=True, type=click.Path(dir_okay=False))
@click.option("--query-id", required=True)
@click.option("--k", type=int, default=10, show_default=True)
@click.option("--exclude-anchor/--include-anchor", default=True, show_default=True)
@click.option("--sample", "draw_sample", is_flag=True,
              help="Also draw one concept sample from the top-k set.")
@common_options
def mine_cmd(pool_prefix, query_id, k, exclude_anchor, draw_sample, out, seed, threads, config_path):
    """Exact nearest-neighbor search over a stored embedding pool."""
    config_file = _load_config_file(config_path)
    threads = resolve_threads(threads)
    ids, vectors, modality = tensorio.load_pool(pool_prefix)
    index = mining.build_index(ids, vectors, modality)
    neighbors = mining.top_k(index, query_id, k, exclude_anchor)
    report = _report_skeleton("mine", seed, threads, config_file)
    report.update({
        "query_id": query_id,
        "k": k,
        "exclude_anchor": exclude_anchor,
        "modality": modality,
        "neighbors": neighbors,
    })
    if draw_sample:
        cfg = mining.MiningConfig(k=k, exclude_anchor=exclude_anchor, seed=seed)
        report["concept"] = mining.sample_concept(index, query_id, cfg)
    _emit(report, out)


def _loss_flag_options(f):
    f = click.option("--temperature", type=float, default=None,
                     help="Contrastive temperature (default 0.07).")(f)
    f = click.option("--alignment/--no-alignment", "alignment", default=None,
                     help="Toggle the projected alignment term.")(f)
    f = click.option("--intra/--no-intra", "intra", default=None,
                     help="Toggle the intra-modality term.")(f)
    f = click.option("--symmetric/--asymmetric", "symmetric", default=None,
                     help="Average both anchor directions or use visual anchors only.")(f)
    f = click.option("--negative-slots", type=click.Choice(["same", "random"]), default=None)(f)
    return f


def _toy_loss_cfg(config_file, temperature, alignment, intra, symmetric, negative_slots, seed):
    return _loss_config(
        config_file,
        temperature=temperature,
        include_alignment_term=alignment,
        include_intra_modality_term=intra,
        symmetric=symmetric,
        negative_slots=negative_slots,
        negative_seed=seed,
    )


@main.command("loss-check")
@click.option("--batch", type=int, default=4, show_default=True)
@click.option("--channels", type=int, default=8, show_default=True)
@click.option("--height", type=int, default=3, show_default=True)
@click.option("--width", type=int, default=3, show_default=True)
@click.option("--slots", type=int, default=3, show_default=True)
@_loss_flag_options
@common_options
def loss_check_cmd(batch, channels, height, width, slots, temperature, alignment, intra,
                   symmetric, negative_slots, out, seed, threads, config_path):
    """Evaluate the multi-positive objective on a seeded toy batch."""
    config_file = _load_config_file(config_path)
    threads = resolve_threads(threads)
    cfg = _toy_loss_cfg(config_file, temperature, alignment, intra, symmetric, negative_slots, seed)
    toy_batch, projections = gradcheck.make_toy_batch(
        seed, n=batch, c=channels, h=height, w=width, slots=slots
    )
    loss_report = multi_positive_loss(toy_batch, cfg, projections)
    report = _report_skeleton("loss-check", seed, threads, config_file)
    report.update({
        "batch": batch, "channels": channels, "height": height, "width": width, "slots": slots,
        "loss": loss_report.to_dict(),
    })
    _emit(report, out)


@main.command("grad-check")
@click.option("--instances", type=int, default=5, show_default=True)
@click.option("--batch", type=int, default=4, show_default=True)
@click.option("--channels", type=int, default=8, show_default=True)
@click.option("--height", type=int, default=3, show_default=True)
@click.option("--width", type=int, default=3, show_default=True)
@click.option("--slots", type=int, default=3, show_default=True)
@click.option("--step", type=float, default=1e-3, show_default=True)
@_loss_flag_options
@common_options
def grad_check_cmd(instances, batch, channels, height, width, slots, step, temperature, alignment,
                   intra, symmetric, negative_slots, out, seed, threads, config_path):
    """Verify analytic gradients against central finite differences."""
    config_file = _load_config_file(config_path)
    threads = resolve_threads(threads)
    cfg = _toy_loss_cfg(config_file, temperature, alignment, intra, symmetric, negative_slots, seed)
    per_instance = []
    for k in range(instances):
        toy_batch, projections = gradcheck.make_toy_batch(
            seed + k, n=batch, c=channels, h=height, w=width, slots=slots
        )
        result = gradcheck.gradient_check(toy_batch, cfg, projections, step=step)
        per_instance.append(result.max_relative_error)
    report = _report_skeleton("grad-check", seed, threads, config_file)
    report.update({
        "instances": instances,
        "step": step,
        "loss_config": cfg.to_dict(),
        "max_relative_error": max(per_instance),
        "per_instance": per_instance,
    })
    _emit(report, out)


@main.command("bench-gen")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--scenes", type=int, default=10, show_default=True)
@click.option("--sources", type=int, default=2, show_default=True)
@click.option("--resolution", type=int, nargs=2, default=(16, 16), show_default=True)
@click.option("--channels", type=int, default=8, show_default=True)
@click.option("--categories", type=int, default=6, show_default=True)
@click.option("--noise", type=float, default=0.0, show_default=True)
@click.option("--box-min", type=int, default=3, show_default=True)
@click.option("--box-max", type=int, default=6, show_default=True)
@click.option("--negatives-per-scene", type=int, default=0, show_default=True)
@common_options
def bench_gen_cmd(out_dir, scenes, sources, resolution, channels, categories, noise,
                  box_min, box_max, negatives_per_scene, out, seed, threads, config_path):
    """Generate a synthetic multi-source benchmark with planted ground truth."""
    config_file = _load_config_file(config_path)
    threads = resolve_threads(threads)
    spec = bench.SyntheticSceneSpec(
        resolution=tuple(resolution),
        sources_per_scene=sources,
        channels=channels,
        num_categories=categories,
        noise=noise,
        box_min=box_min,
        box_max=box_max,
        seed=seed,
    )
    mani = bench.generate_benchmark(spec, scenes, out_dir, negatives_per_scene)
    report = _report_skeleton("bench-gen", seed, threads, config_file)
    report.update({
        "out_dir": str(out_dir),
        "manifest": str(Path(out_dir) / "manifest.json"),
        "scenes": scenes,
        "num_entries": len(mani.entries),
        "scene_spec": spec.to_dict(),
        "negatives_per_scene": negatives_per_scene,
    })
    _emit(report, out)


@main.command("toy-train")
@click.option("--data", "data_path", required=True, type=click.Path(),
              help="Benchmark directory or manifest path.")
@click.option("--steps", type=int, default=200, show_default=True)
@click.option("--lr", type=float, default=0.1, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--heldout-fraction", type=float, default=0.4, show_default=True)
@click.option("--view-noise", type=float, default=0.1, show_default=True)
@click.option("--mining-k", type=int, default=5, show_default=True)
@click.option("--eval-variant", type=click.Choice(["ciou", "adaptive"]), default="adaptive",
              show_default=True)
@click.option("--save-projections", type=click.Path(), default=None,
              help="Prefix to store the trained projection parameters.")
@_loss_flag_options
@common_options
def toy_train_cmd(data_path, steps, lr, batch_size, heldout_fraction, view_noise, mining_k,
                  eval_variant, save_projections, temperature, alignment, intra, symmetric,
                  negative_slots, out, seed, threads, config_path):
    """Gradient descent on the contrastive objective over generated data."""
    config_file = _load_config_file(config_path)
    threads = resolve_threads(threads)
    cfg = _toy_loss_cfg(config_file, temperature, alignment, intra, symmetric, negative_slots, seed)
    metric_cfg = _metric_config(config_file)
    path = Path(data_path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    mani = manifest_mod.load_manifest(manifest_path)
    result = train.toy_train(
        mani,
        cfg,
        steps=steps,
        lr=lr,
        seed=seed,
        batch_size=batch_size,
        heldout_fraction=heldout_fraction,
        view_noise=view_noise,
        mining_k=mining_k,
        eval_variant=eval_variant,
        metric_cfg=metric_cfg,
    )
    if save_projections:
        pv, pa = result.projections
        tensorio.save_projection(str(save_projections) + ".visual", pv)
        tensorio.save_projection(str(save_projections) + ".audio", pa)
    report = _report_skeleton("toy-train", seed, threads, config_file)
    report.update({"dataset": mani.dataset, "result": result.to_dict()})
    _emit(report, out)


if __name__ == "__main__":
    main()
