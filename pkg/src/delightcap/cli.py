"""Command-line entry point: ``delightcap <command> [--config FILE] [--set key=value ...]``.

Every command reads a flat ``key = value`` config file (values are JSON, bare
words are strings); ``--set`` flags override file values.  Relative paths are
resolved against ``$DELIGHTCAP_OUTPUT_ROOT`` (default: the working directory).
Each run writes ``run_manifest.json`` next to its outputs.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
Failures print one JSON line on stderr:
``{"error": <kind>, "exit_code": <n>, "key": <config key or null>, "message": <text>}``.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import ConfigError, substream, substream_seed
from .data_engine import DataConfig, generate_dataset, head_asset, load_pairs, procedural_hdri
from .data_engine.align import DegenerateLandmarksError
from .data_engine.render import EmptyCoverageError
from .evaluation import ExternalScorer, evaluate_method, read_table, summarize
from .io import (FormatError, file_digest, load_checkpoint, parse_value, read_config, read_pfm,
                 save_checkpoint, tree_digests, write_pfm)
from .nets.enhancer import EnhancerConfig, enhance, enhancer_state, load_enhancer_state, train_enhancer
from .nets.model import ModelConfig, resize, to_image, to_tensor
from .nets.train import TrainConfig, load_model_state, model_state, predict, regime_model_config, train
from .reconstruction import (BundleError, FusionError, NumericalError, RankDeficientError, ReconConfig,
                             RefineConfig, TooFewViewsError, read_bundle, reconstruct, write_bundle,
                             write_result)
from .reconstruction.synthetic import orbit_cameras, random_sh, synthetic_bundle

log = logging.getLogger("delightcap")

OUTPUT_ROOT_ENV = "DELIGHTCAP_OUTPUT_ROOT"
EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4


class DataError(RuntimeError):
    pass


# -- per-command settings --------------------------------------------------------

@dataclasses.dataclass
class GenerateIO:
    out: str = "dataset"
    kind: str = "pairs"          # "pairs" or "bundle"
    bundle_views: int = 16
    bundle_size: int = 128
    bundle_lighting: str = "sh"  # "sh" (Lambertian SH) or "env" (scan render under an HDRI)


@dataclasses.dataclass
class TrainBaseIO:
    data: str = "dataset"
    out: str = "base"
    eval_data: str = ""


@dataclasses.dataclass
class TrainDetailIO:
    data: str = "dataset"
    out: str = "detail"


@dataclasses.dataclass
class DelightIO:
    input: str = "dataset"
    checkpoint: str = "base/model.ckpt"
    enhancer: str = ""
    source: str = "rendered"
    out: str = "delit"


@dataclasses.dataclass
class ReconstructIO:
    bundle: str = "bundle"
    checkpoint: str = ""
    enhancer: str = ""
    out: str = "recon"


@dataclasses.dataclass
class EvaluateIO:
    pred: str = "delit"
    gt: str = "dataset"
    method: str = "method"
    perceptual_cmd: str = ""
    out: str = "eval"


@dataclasses.dataclass
class ReportIO:
    runs: list = dataclasses.field(default_factory=list)
    out: str = "report"


COMMANDS = {
    "generate": (GenerateIO, DataConfig),
    "train-base": (TrainBaseIO, ModelConfig, TrainConfig),
    "train-detail": (TrainDetailIO, EnhancerConfig),
    "delight": (DelightIO,),
    "reconstruct": (ReconstructIO, ReconConfig, RefineConfig),
    "evaluate": (EvaluateIO,),
    "report": (ReportIO,),
}


def build_sections(command, values):
    """Split flat config ``values`` over the command's dataclasses; reject unknown keys."""
    classes = COMMANDS[command]
    owner = {}
    for cls in classes:
        for f in dataclasses.fields(cls):
            if f.name == "refine" and cls is ReconConfig:
                continue
            owner.setdefault(f.name, cls)
    for key in values:
        if key not in owner:
            raise ConfigError(f"unknown config key '{key}' for command {command}", key=key)
    out = []
    for cls in classes:
        kw = {k: v for k, v in values.items() if owner[k] is cls}
        try:
            out.append(cls(**kw))
        except (TypeError, ValueError) as exc:
            key = next(iter(kw), None)
            raise ConfigError(f"{cls.__name__}: {exc}", key=key) from exc
    return out


def parse_overrides(items):
    values = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not key=value", key=item)
        k, v = item.split("=", 1)
        values[k.strip()] = parse_value(v)
    return values


def output_root():
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "."))


def resolve(path):
    p = Path(path)
    return p if p.is_absolute() else output_root() / p


def _echo(sections):
    cfg = {}
    for s in sections:
        for k, v in dataclasses.asdict(s).items():
            cfg.setdefault(k, v)
    return cfg


def write_manifest(out_dir, command, sections, seeds, inputs, started):
    out = Path(out_dir)
    outputs = {k: v for k, v in tree_digests(out).items() if k != "run_manifest.json"}
    manifest = {
        "command": command,
        "version": __version__,
        "config": _echo(sections),
        "seeds": seeds,
        "inputs": inputs,
        "outputs": outputs,
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _input_digests(*paths):
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_file():
            out[p.as_posix()] = file_digest(p)
        elif p.is_dir():
            out.update({f"{p.as_posix()}/{k}": v for k, v in tree_digests(p).items()
                        if not k.endswith("run_manifest.json")})
    return out


def _need(path, what):
    if not Path(path).exists():
        raise DataError(f"{what} not found: {path}")
    return Path(path)


def _manifest_of(path):
    p = Path(path)
    return p / "manifest.jsonl" if p.is_dir() else p


# -- commands ----------------------------------------------------------------------

def cmd_generate(sections):
    io, data = sections
    out = resolve(io.out)
    out.mkdir(parents=True, exist_ok=True)
    if io.kind == "pairs":
        generate_dataset(data, out)
    elif io.kind == "bundle":
        rng = substream(data.seed, "bundle")
        asset = head_asset(rng, data.tex_res, name="bundle_subject")
        cams = orbit_cameras(io.bundle_views, io.bundle_size)
        if io.bundle_lighting == "sh":
            bundle = synthetic_bundle(asset, cams, lighting=random_sh(rng))
        elif io.bundle_lighting == "env":
            env = procedural_hdri(substream(data.seed, "bundle-env"), data.hdri_height)
            bundle = synthetic_bundle(asset, cams, env=env, exponent=data.exponent)
        else:
            raise ConfigError(f"bundle_lighting must be 'sh' or 'env', got {io.bundle_lighting!r}",
                              key="bundle_lighting")
        write_bundle(out, bundle)
        write_pfm(out / "gt_albedo_uv.pfm", asset.albedo_tex)
        write_pfm(out / "gt_skin_uv.pfm", asset.skin_tex)
    else:
        raise ConfigError(f"kind must be 'pairs' or 'bundle', got {io.kind!r}", key="kind")
    return out, {"seed": data.seed, "hdri_seed": data.hdri_seed}, {}


def _load_base(path):
    cfg, params = load_checkpoint(_need(path, "checkpoint"))
    if cfg.get("kind") != "base":
        raise DataError(f"{path}: not a base-model checkpoint")
    mc = ModelConfig(**cfg["model"])
    return load_model_state(mc, params), cfg


def _load_enhancer(path):
    cfg, params = load_checkpoint(_need(path, "enhancer checkpoint"))
    if cfg.get("kind") != "detail":
        raise DataError(f"{path}: not an enhancer checkpoint")
    return load_enhancer_state(EnhancerConfig(**cfg["enhancer"]), params)


def cmd_train_base(sections):
    io, mc, tc = sections
    data = _need(resolve(io.data), "dataset")
    pairs = load_pairs(_manifest_of(data))
    eval_pairs = load_pairs(_manifest_of(resolve(io.eval_data))) if io.eval_data else None
    for p in pairs:
        if p.image.shape[:2] != (mc.image_size, mc.image_size):
            raise DataError(f"pair {p.meta.get('index')}: image {p.image.shape[:2]} does not match "
                            f"image_size {mc.image_size}")
    out = resolve(io.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    log_path.unlink(missing_ok=True)
    res = train(pairs, mc, tc, log_path, eval_pairs)
    mc_eff = regime_model_config(mc, tc.regime)
    save_checkpoint(out / "model.ckpt", {"kind": "base", "model": dataclasses.asdict(mc_eff),
                                         "train": dataclasses.asdict(tc)}, model_state(res.model))
    if res.phase_eval:
        (out / "phase_eval.json").write_text(json.dumps(res.phase_eval, indent=2, sort_keys=True) + "\n")
    seeds = {"seed": tc.seed, "init": substream_seed(tc.seed, "init"), "train": substream_seed(tc.seed, "train")}
    return out, seeds, _input_digests(data)


def cmd_train_detail(sections):
    io, ec = sections
    data = _need(resolve(io.data), "dataset")
    pairs = load_pairs(_manifest_of(data), sources=("rendered",))
    if not pairs:
        raise DataError(f"{data}: no rendered pairs")
    out = resolve(io.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    log_path.unlink(missing_ok=True)
    model, _ = train_enhancer(pairs, ec, log_path)
    save_checkpoint(out / "enhancer.ckpt", {"kind": "detail", "enhancer": dataclasses.asdict(ec)},
                    enhancer_state(model))
    seeds = {"seed": ec.seed, "init": substream_seed(ec.seed, "enhancer-init"),
             "degrade": substream_seed(ec.seed, "degrade")}
    return out, seeds, _input_digests(data)


def _delight_inputs(path):
    """(names, images, masks) from a dataset directory or a directory of *_image.pfm."""
    path = _need(path, "input")
    manifest = _manifest_of(path)
    if manifest.is_file():
        pairs = load_pairs(manifest)
        return [f"{p.meta['index']:05d}" for p in pairs], [p.image for p in pairs], [p.mask for p in pairs]
    names, images, masks = [], [], []
    for img in sorted(path.glob("*_image.pfm")):
        name = img.name[: -len("_image.pfm")]
        image = read_pfm(img)
        mpath = img.with_name(f"{name}_mask.pfm")
        names.append(name)
        images.append(image)
        masks.append(read_pfm(mpath) > 0.5 if mpath.exists() else np.ones(image.shape[:2], dtype=bool))
    if not names:
        raise DataError(f"{path}: no *_image.pfm inputs")
    return names, images, masks


def cmd_delight(sections):
    (io,) = sections
    ckpt = resolve(io.checkpoint)
    model, _ = _load_base(ckpt)
    enh = _load_enhancer(resolve(io.enhancer)) if io.enhancer else None
    inp = resolve(io.input)
    names, images, masks = _delight_inputs(inp)
    size = model.cfg.image_size
    out = resolve(io.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, image, mask in zip(names, images, masks):
        h, w = image.shape[:2]
        img = to_image(resize(to_tensor(image), size))[0] if (h, w) != (size, size) else image
        m = mask if (h, w) == (size, size) else to_image(resize(
            torch.as_tensor(mask, dtype=torch.float32)[None, None], size))[0, ..., 0] > 0.999
        pred = predict(model, img[None], m[None], io.source)[0]
        if enh is not None:
            pred = enhance(enh, img, pred, m)[0]
        if pred.shape[:2] != (h, w):
            pred = to_image(torch.nn.functional.interpolate(to_tensor(pred), size=(h, w), mode="bilinear",
                                                            align_corners=False))[0]
        write_pfm(out / f"{name}_albedo.pfm", np.clip(pred, 0, None))
    inputs = _input_digests(inp, ckpt, *( [resolve(io.enhancer)] if io.enhancer else []))
    return out, {}, inputs


def cmd_reconstruct(sections):
    io, rc, ref = sections
    rc = dataclasses.replace(rc, refine=ref)
    bundle_dir = _need(resolve(io.bundle), "bundle")
    bundle = read_bundle(bundle_dir)
    model = _load_base(resolve(io.checkpoint))[0] if io.checkpoint else None
    enh = _load_enhancer(resolve(io.enhancer)) if io.enhancer else None
    result = reconstruct(bundle, rc, model, enh)
    out = write_result(resolve(io.out), result)
    extra = [resolve(p) for p in (io.checkpoint, io.enhancer) if p]
    return out, {}, _input_digests(bundle_dir, *extra)


def _gt_lookup(gt_dir, name):
    gt_dir = Path(gt_dir)
    for base in (gt_dir, gt_dir / "pairs", gt_dir / "views"):
        a, m = base / f"{name}_albedo.pfm", base / f"{name}_mask.pfm"
        if a.exists() and m.exists():
            return a, m
    raise DataError(f"no ground truth albedo/mask for {name} under {gt_dir}")


def cmd_evaluate(sections):
    (io,) = sections
    pred_dir = _need(resolve(io.pred), "prediction directory")
    gt_dir = _need(resolve(io.gt), "ground-truth directory")
    preds, gts, masks, names = [], [], [], []
    for p in sorted(pred_dir.glob("*_albedo.pfm")):
        name = p.name[: -len("_albedo.pfm")]
        a, m = _gt_lookup(gt_dir, name)
        preds.append(read_pfm(p))
        gts.append(read_pfm(a))
        masks.append(read_pfm(m) > 0.5)
        names.append(name)
    if not preds:
        raise DataError(f"{pred_dir}: no *_albedo.pfm predictions")
    scorer = ExternalScorer(io.perceptual_cmd.split()) if io.perceptual_cmd else None
    out = resolve(io.out)
    records, summary = evaluate_method(preds, gts, masks, io.method, names, scorer, out)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out, {}, _input_digests(pred_dir, gt_dir)


def cmd_report(sections):
    (io,) = sections
    runs = [resolve(r) for r in io.runs] if io.runs else sorted(
        p.parent for p in output_root().rglob("run_manifest.json"))
    rows, records = [], []
    for r in runs:
        mpath = _need(Path(r) / "run_manifest.json", "run manifest")
        man = json.loads(mpath.read_text())
        rows.append({"run": Path(r).as_posix(), "command": man["command"], "wall_time_s": man["wall_time_s"],
                     "outputs": len(man["outputs"])})
        table = Path(r) / "metrics.tsv"
        if table.exists():
            records += read_table(table)
    out = resolve(io.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(records)
    lines = ["# Run report", "", "| run | command | wall time (s) | outputs |", "|---|---|---|---|"]
    lines += [f"| {r['run']} | {r['command']} | {r['wall_time_s']} | {r['outputs']} |" for r in rows]
    if summary:
        lines += ["", "| method | PSNR (dB) | SSIM | perceptual | images |", "|---|---|---|---|---|"]
        for m, s in summary.items():
            perc = "" if s["perceptual"] is None else f"{s['perceptual']:.4f}"
            lines.append(f"| {m} | {s['psnr']:.2f} | {s['ssim']:.4f} | {perc} | {s['count']} |")
    (out / "report.md").write_text("\n".join(lines) + "\n")
    (out / "report.json").write_text(json.dumps({"runs": rows, "metrics": summary}, indent=2,
                                                sort_keys=True) + "\n")
    return out, {}, {}


HANDLERS = {
    "generate": cmd_generate,
    "train-base": cmd_train_base,
    "train-detail": cmd_train_detail,
    "delight": cmd_delight,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}

_DATA_ERRORS = (DataError, FormatError, BundleError, FusionError, TooFewViewsError, DegenerateLandmarksError,
                RankDeficientError, EmptyCoverageError, FileNotFoundError, ValueError, KeyError, OSError)


def _fail(kind, code, message, key=None):
    print(json.dumps({"error": kind, "exit_code": code, "key": key, "message": message}), file=sys.stderr)
    return code


def load_config(path):
    try:
        return read_config(path)
    except (OSError, FormatError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


def make_parser():
    parser = argparse.ArgumentParser(prog="delightcap", description="Albedo capture toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value (repeatable; wins over the file)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    torch.use_deterministic_algorithms(True)
    started = time.perf_counter()
    try:
        values = dict(load_config(args.config)) if args.config else {}
        values.update(parse_overrides(args.set))
        sections = build_sections(args.command, values)
        out, seeds, inputs = HANDLERS[args.command](sections)
        write_manifest(out, args.command, sections, seeds, inputs, started)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, str(exc), exc.key)
    except NumericalError as exc:
        return _fail("numerical", EXIT_NUMERICAL, str(exc))
    except FloatingPointError as exc:
        return _fail("numerical", EXIT_NUMERICAL, str(exc))
    except _DATA_ERRORS as exc:
        return _fail("data", EXIT_DATA, str(exc).splitlines()[0] if str(exc) else type(exc).__name__)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
