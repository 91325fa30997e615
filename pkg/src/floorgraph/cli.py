"""``floorgraph`` command line: synth-data, pretrain, train, generate,
evaluate and ablate.

Every verb writes ``config.resolved.json`` next to its outputs; feeding that
file back through ``--config`` with the same seed reproduces the run. On
failure a one-line JSON error record goes to stderr and the exit status is
nonzero (2 for usage errors).
"""

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ConfigError, resolve
from .exceptions import FloorgraphError
from .generator import generate, masks_to_rects
from .graph import BubbleDiagram
from .layout import rasterize, save_raster
from .metrics import RasterFeatureExtractor, evaluate_suite
from .pretraining import export_encoder, pretrain_run
from .synth import BUCKETS, bucket_of, generate_corpus, read_dataset, write_dataset
from .training import GANTrainer, run_training

VERBS = ("synth-data", "pretrain", "train", "generate", "evaluate", "ablate")
CONFIG_NAME = "config.resolved.json"

# Each preset names the switches it flips relative to the defaults. The
# architecture switches sit on a base without the cycle loss; the masking
# presets add pre-training on top of the full adversarial objective.
ABLATIONS = {
    "no-gcyc": {"train.lambda2": 0.0, "use_pretrain": False},
    "no-nna": {"generator.use_nna": False, "train.lambda2": 0.0, "use_pretrain": False},
    "no-cna": {"generator.use_cna": False, "train.lambda2": 0.0, "use_pretrain": False},
    "no-gmb": {"generator.use_gmb": False, "train.lambda2": 0.0, "use_pretrain": False},
    "eq3": {"generator.update_variant": "eq3", "train.lambda2": 0.0, "use_pretrain": False},
    "eq4": {"generator.update_variant": "eq4", "train.lambda2": 0.0, "use_pretrain": False},
    "gcyc": {"use_pretrain": False},
    "node-mask-only": {"pretrain.branches": ["node"], "use_pretrain": True},
    "edge-mask-only": {"pretrain.branches": ["edge"], "use_pretrain": True},
    "both": {"pretrain.branches": ["node", "edge"], "use_pretrain": True},
}

REQUIRED = {
    "synth-data": ("out",),
    "pretrain": ("data", "out"),
    "train": ("data", "out"),
    "generate": ("checkpoint", "diagrams", "out"),
    "evaluate": ("data", "out"),
    "ablate": ("data", "out"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class Command:
    verb: str
    options: dict = field(default_factory=dict)


def _add_shared(p):
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--bucket", choices=BUCKETS)
    p.add_argument("--steps", type=int)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--mask-ratio", type=float)
    p.add_argument("--variant", choices=("eq2", "eq3", "eq4"))
    p.add_argument("--no-cna", action="store_true")
    p.add_argument("--no-nna", action="store_true")
    p.add_argument("--no-gmb", action="store_true")
    p.add_argument("--no-pretrain", action="store_true")


def build_parser():
    parser = _Parser(prog="floorgraph", description="Graph-constrained floorplan generation.")
    sub = parser.add_subparsers(dest="verb", parser_class=_Parser)
    for verb in VERBS:
        p = sub.add_parser(verb)
        _add_shared(p)
        if verb == "synth-data":
            p.add_argument("--count", type=int)
            p.add_argument("--min-rooms", type=int)
            p.add_argument("--max-rooms", type=int)
        if verb in ("pretrain", "train", "evaluate", "ablate"):
            p.add_argument("--data", type=Path)
        if verb == "generate":
            p.add_argument("--diagrams", type=Path)
            p.add_argument("--count", type=int, default=1, help="samples per diagram")
        if verb == "evaluate":
            p.add_argument("--n-samples", type=int)
        if verb == "ablate":
            p.add_argument("--only", choices=tuple(ABLATIONS), action="append")
    return parser


def parse(argv):
    """argv (without the program name) -> :class:`Command`; raises UsageError."""
    ns = build_parser().parse_args(argv)
    if ns.verb is None:
        raise UsageError(f"a verb is required: one of {', '.join(VERBS)}")
    options = {k: v for k, v in vars(ns).items() if k != "verb"}
    missing = [k for k in REQUIRED[ns.verb] if options.get(k) is None]
    if missing:
        raise UsageError(f"{ns.verb} requires " + ", ".join("--" + k.replace("_", "-") for k in missing))
    return Command(ns.verb, options)


def overrides_from(options):
    """Dotted config overrides for every flag that was given."""
    o = {}
    if options.get("seed") is not None:
        o.update({"seed": options["seed"], "train.seed": options["seed"], "pretrain.seed": options["seed"]})
    if options.get("steps") is not None:
        o.update({"train.max_steps": options["steps"], "pretrain.steps": options["steps"]})
    if options.get("mask_ratio") is not None:
        o["pretrain.mask_ratio"] = options["mask_ratio"]
    if options.get("variant") is not None:
        o["generator.update_variant"] = options["variant"]
    for flag in ("cna", "nna", "gmb"):
        if options.get(f"no_{flag}"):
            o[f"generator.use_{flag}"] = False
    if options.get("no_pretrain"):
        o["use_pretrain"] = False
    for key in ("count", "min_rooms", "max_rooms"):
        if options.get(key) is not None and "diagrams" not in options:
            o[f"data.{key}"] = options[key]
    if options.get("n_samples") is not None:
        o["eval.n_samples"] = options["n_samples"]
    return o


def _snapshot(cfg, directory):
    directory.mkdir(parents=True, exist_ok=True)
    cfg.save(directory / CONFIG_NAME)


def _training_pool(samples, bucket):
    return [s for s in samples if bucket is None or bucket_of(s.num_rooms) != bucket]


def _check_generator_matches(cfg):
    g, p = cfg.generator, cfg.pretrain
    if (g.channels, g.resolutions[0], g.gte_blocks) != (p.channels, p.volume_size, p.encoder_blocks):
        raise ConfigError(
            "pretrain.channels/volume_size/encoder_blocks must equal generator.channels/resolutions[0]/gte_blocks"
        )


def run_synth(cfg, opts):
    out = opts["out"]
    samples = generate_corpus(cfg.data.count, cfg.seed, cfg.data.min_rooms, cfg.data.max_rooms)
    _snapshot(cfg, out.parent)
    write_dataset(samples, out)
    return {"samples": len(samples), "path": str(out)}


def run_pretrain(cfg, opts, samples=None):
    out = opts["out"]
    samples = read_dataset(opts["data"]) if samples is None else samples
    diagrams = [s.diagram for s in _training_pool(samples, opts.get("bucket"))]
    _snapshot(cfg, out)
    _, losses = pretrain_run(diagrams, cfg.pretrain, out)
    return {"steps": len(losses), "final_loss": losses[-1] if losses else None, "encoder": str(out / "encoder")}


def run_train(cfg, opts, samples=None, encoder=None):
    out = opts["out"]
    samples = read_dataset(opts["data"]) if samples is None else samples
    _snapshot(cfg, out)
    trainer = GANTrainer(cfg.generator, cfg.critic, cfg.train)
    encoder = encoder or opts.get("checkpoint")
    if cfg.use_pretrain and encoder is not None:
        _check_generator_matches(cfg)
        export_encoder(encoder, trainer.generator)
    history = run_training(samples, opts.get("bucket"), trainer, out)
    return {"steps": len(history), "checkpoint": str(out / "checkpoint"), "pretrained": bool(cfg.use_pretrain and encoder)}


def _load_diagrams(path):
    """A dataset (JSON lines of layout records) or a JSON list of diagrams."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("["):
        return [BubbleDiagram(d["room_types"], [tuple(e) for e in d["edges"]]) for d in json.loads(text)]
    return [s.diagram for s in read_dataset(path)]


def _write_layout(out, stem, diagram, rects):
    image = rasterize(rects, diagram.room_types)
    save_raster(image, out / f"{stem}.png")
    record = {
        "room_types": [int(t) for t in diagram.room_types],
        "edges": [list(e) for e in diagram.edges],
        "rects": [None if r is None else r.as_list() for r in rects],
    }
    (out / f"{stem}.json").write_text(json.dumps(record) + "\n", encoding="utf-8")


def run_generate(cfg, opts):
    out = opts["out"]
    trainer = GANTrainer.load(opts["checkpoint"])
    gen = trainer.generator.eval()
    diagrams = _load_diagrams(opts["diagrams"])
    _snapshot(cfg, out)
    written = 0
    for i, d in enumerate(diagrams):
        for k in range(opts.get("count") or 1):
            rects = masks_to_rects(generate(gen, d, [cfg.seed, i, k]))
            _write_layout(out, f"sample_{i:04d}_{k:02d}", d, rects)
            written += 1
    return {"samples": written}


def _generator_layout_fn(gen, seed):
    def layout_fn(diagram, k):
        return masks_to_rects(generate(gen, diagram, [seed, k]))

    return layout_fn


def _evaluate(cfg, held_out, gen, bucket, out):
    extractor = RasterFeatureExtractor(cfg.eval.feature_dim, cfg.eval.extractor_seed)
    if gen is None:
        lookup = {id(s.diagram): s.rects for s in held_out}
        layout_fn = lambda d, k: lookup[id(d)]  # noqa: E731
    else:
        layout_fn = _generator_layout_fn(gen.eval(), cfg.seed)
    report = evaluate_suite(layout_fn, held_out, extractor, cfg.eval.n_samples, bucket or "all")
    report.to_json(out / "report.json")
    extractor.save(out / "extractor.npz")
    return report


def run_evaluate(cfg, opts):
    """Score a generator checkpoint on the held-out bucket. Without a
    checkpoint the held-out layouts themselves are scored, a reference run
    with compatibility 0 and Fréchet distance 0."""
    out = opts["out"]
    bucket = opts.get("bucket")
    samples = read_dataset(opts["data"])
    held_out = [s for s in samples if bucket is None or bucket_of(s.num_rooms) == bucket]
    if not held_out:
        raise ValueError(f"no held-out samples in bucket {bucket!r}")
    gen = GANTrainer.load(opts["checkpoint"]).generator if opts.get("checkpoint") else None
    _snapshot(cfg, out)
    report = _evaluate(cfg, held_out, gen, bucket, out)
    return report.to_dict()


def run_ablate(cfg, opts):
    out = opts["out"]
    bucket = opts.get("bucket")
    samples = read_dataset(opts["data"])
    held_out = [s for s in samples if bucket is None or bucket_of(s.num_rooms) == bucket]
    if not held_out:
        raise ValueError(f"no held-out samples in bucket {bucket!r}")
    _snapshot(cfg, out)
    summary = {}
    for name in opts.get("only") or ABLATIONS:
        run_cfg = cfg.merged(ABLATIONS[name])
        run_dir = out / name
        encoder = None
        if run_cfg.use_pretrain:
            _check_generator_matches(run_cfg)
            run_pretrain(run_cfg, {"out": run_dir / "pretrain", "bucket": bucket}, samples)
            encoder = run_dir / "pretrain" / "encoder"
        run_train(run_cfg, {"out": run_dir / "train", "bucket": bucket}, samples, encoder)
        gen = GANTrainer.load(run_dir / "train" / "checkpoint").generator
        _snapshot(run_cfg, run_dir)
        summary[name] = _evaluate(run_cfg, held_out, gen, bucket, run_dir).to_dict()
    (out / "ablation.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return {"runs": list(summary)}


RUNNERS = {
    "synth-data": run_synth,
    "pretrain": run_pretrain,
    "train": run_train,
    "generate": run_generate,
    "evaluate": run_evaluate,
    "ablate": run_ablate,
}


def run(command):
    """Execute ``command``; returns the process exit status."""
    opts = command.options
    cfg = resolve(opts.get("config"), overrides_from(opts))
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed)
    result = RUNNERS[command.verb](cfg, opts)
    print(json.dumps({"verb": command.verb, "status": "ok", **result}, default=str))
    return 0


def _error(kind, exc, status):
    print(json.dumps({"status": "error", "error": kind, "message": str(exc)}), file=sys.stderr)
    return status


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        command = parse(argv)
    except UsageError as exc:
        build_parser().print_usage(sys.stderr)
        return _error("UsageError", exc, 2)
    try:
        return run(command)
    except ConfigError as exc:
        return _error("ConfigError", exc, 2)
    except (FloorgraphError, ValueError, OSError, KeyError) as exc:
        return _error(type(exc).__name__, exc, 1)


if __name__ == "__main__":
    sys.exit(main())
