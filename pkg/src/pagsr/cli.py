"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import gradcheck as gc
from .data.dataset import make_dataset
from .data.degrade import DEFAULT_SIGMAS, DegradationSpec, degrade
from .edges import DEFAULT_LEVELS, EdgePyramid, extract_fallback_pyramid, load_pyramid, save_pyramid
from .errors import InvalidArgument, InvalidConfig, PagSrError
from .imageio import IMAGE_SUFFIXES, read_image, write_image
from .metrics import LossWeights, image_metrics, average_reports
from .model import ModelConfig, super_resolve
from .plotting import plot_history, plot_sample
from .synthetic import write_dataset
from .train import TrainConfig, fit, load_checkpoint

log = logging.getLogger("pagsr")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
SIGMA_RANGE = (0.0, 4.0)


@dataclass
class DataSection:
    root: str = None
    scale: int = 4
    sigmas: list = field(default_factory=lambda: list(DEFAULT_SIGMAS))
    patch: int = 64  # HR crop side for training; null trains on full images
    train_split: str = "train"
    val_split: str = "test"
    fallback_edges: bool = False


def _section(cls, values, name):
    values = values or {}
    if not isinstance(values, dict):
        raise InvalidConfig(f"section {name!r} must be an object")
    unknown = set(values) - {f.name for f in fields(cls)}
    if unknown:
        raise InvalidConfig(f"unknown keys in section {name!r}: {sorted(unknown)}")
    return values


@dataclass
class RunConfig:
    data: DataSection
    model: ModelConfig
    train: TrainConfig
    loss: LossWeights

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - {"data", "model", "train", "loss"}
        if unknown:
            raise InvalidConfig(f"unknown config sections: {sorted(unknown)}")
        data = DataSection(**_section(DataSection, doc.get("data"), "data"))
        if data.root is None:
            raise InvalidConfig("data.root is required")
        scale_exp = int(data.scale).bit_length() - 1
        if 2**scale_exp != data.scale:
            raise InvalidConfig(f"data.scale must be a power of two, got {data.scale}")
        model_values = dict(doc.get("model") or {})
        if "scale_exp" in model_values:
            raise InvalidConfig("set the scale in data.scale, not model.scale_exp")
        model = ModelConfig.from_dict({**model_values, "scale_exp": scale_exp})
        train = TrainConfig.from_dict(_section(TrainConfig, doc.get("train"), "train"))
        loss = LossWeights(**_section(LossWeights, doc.get("loss"), "loss"))
        return cls(data, model, train, loss)

    def to_dict(self):
        model = self.model.to_dict()
        model.pop("scale_exp")
        return {
            "data": dict(self.data.__dict__),
            "model": model,
            "train": self.train.to_dict(),
            "loss": {"gamma1": self.loss.gamma1, "gamma2": self.loss.gamma2},
        }


def _strip_comments(text):
    # JSON with whole-line // comments
    return "\n".join(line for line in text.splitlines() if not line.lstrip().startswith("//"))


def load_run_config(path):
    try:
        doc = json.loads(_strip_comments(Path(path).read_text()))
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config {path} is not valid JSON: {exc}") from exc
    try:
        return RunConfig.from_dict(doc)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from exc


def _pairs(cfg, split, seed, patch):
    spec = DegradationSpec(scale=cfg.data.scale)
    return list(
        make_dataset(
            cfg.data.root,
            spec,
            cfg.data.sigmas,
            patch=patch,
            seed=seed,
            split=split,
            n_levels=cfg.model.n_levels,
            fallback_edges=cfg.data.fallback_edges,
        )
    )


def _split_or_none(root, split):
    return split if (Path(root) / "splits" / f"{split}.txt").exists() else None


# -- commands ---------------------------------------------------------------


def cmd_extract_edges(args):
    src, out = Path(args.input), Path(args.out)
    files = sorted(p for p in src.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) if src.is_dir() else [src]
    failures = 0
    for path in files:
        try:
            guide = read_image(path, channels=3)
        except (OSError, ValueError) as exc:
            print(f"error: cannot read {path}: {exc}", file=sys.stderr)
            failures += 1
            continue
        save_pyramid(extract_fallback_pyramid(guide, args.levels), out / path.stem)
        print(f"{path.stem}: {args.levels} levels")
    return EXIT_DATA if failures else 0


def cmd_degrade(args):
    lo, hi = SIGMA_RANGE
    if not (lo <= args.sigma <= hi) and not args.force:
        raise InvalidArgument(f"sigma {args.sigma} outside [{lo}, {hi}]; pass --force to allow it")
    x_h = read_image(args.input, channels=1)
    x_l = degrade(x_h, DegradationSpec(sigma=args.sigma, scale=args.scale))
    write_image(args.out, x_l, bits=16)
    print(f"{args.input} {x_h.shape[0]}x{x_h.shape[1]} -> {args.out} {x_l.shape[0]}x{x_l.shape[1]}")
    return 0


def cmd_synth(args):
    ids = write_dataset(args.out, args.count, (args.height, args.width), args.seed, args.levels, args.test)
    print(f"wrote {len(ids)} scenes to {args.out}")
    return 0


def _write_samples(model, pairs, directory, limit=3):
    from .bench import bicubic_predictions

    for pair, up in zip(pairs[:limit], bicubic_predictions(pairs[:limit])):
        pred = np.clip(super_resolve(model, pair), 0.0, 1.0)
        safe = pair.id.replace("@", "_")
        write_image(directory / f"{safe}_sr.png", pred)
        plot_sample(up, pred, pair.x_h, directory / f"{safe}_compare.png", title=pair.id)


def _per_image_report(model, pairs, path):
    reports = []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "psnr", "ssim", "mse"])
        for pair in pairs:
            pred = np.clip(super_resolve(model, pair), 0.0, 1.0)
            r = image_metrics(pred, pair.x_h)
            reports.append(r)
            writer.writerow(r.csv_row(pair.id))
        mean = average_reports(reports)
        writer.writerow(mean.csv_row("mean"))
    return mean


def cmd_train(args):
    cfg = load_run_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    root = cfg.data.root
    train_pairs = _pairs(cfg, _split_or_none(root, cfg.data.train_split), cfg.train.seed, cfg.data.patch)
    val_split = _split_or_none(root, cfg.data.val_split)
    val_pairs = _pairs(cfg, val_split, cfg.train.seed, None) if val_split else None
    from .model import build_model

    model = build_model(cfg.model, cfg.train.seed)
    resume = out / "checkpoints" / "last.ckpt"
    state = None
    if args.resume and resume.exists():
        state = load_checkpoint(resume, cfg.model)
        state = type(state)(**{**state.__dict__, "train_config": cfg.train})
        model = state.model
    else:
        (out / "history.jsonl").unlink(missing_ok=True)
    every = max(cfg.train.steps // 20, 1)

    def progress(record):
        if "loss" in record and record["step"] % every == 0:
            print(f"step {record['step']:6d}  loss {record['loss']:.5f}")
        elif "psnr" in record:
            print(f"step {record['step']:6d}  val psnr {record['psnr']:.3f} ssim {record['ssim']:.4f}")

    state, history = fit(model, train_pairs, cfg.train, cfg.loss, val_set=val_pairs, run_dir=out, state=state,
                         on_record=progress)
    samples = out / "samples"
    samples.mkdir(exist_ok=True)
    plot_history(history, samples / "loss_curve.png")
    eval_pairs = val_pairs or train_pairs
    _write_samples(state.model, eval_pairs, samples)
    mean = _per_image_report(state.model, eval_pairs, out / "report.csv")
    print(mean.to_json())
    return 0


def cmd_eval(args):
    state = load_checkpoint(args.checkpoint)
    model = state.model
    scale = model.config.scale
    split = _split_or_none(args.data, args.split)
    pairs = list(
        make_dataset(args.data, DegradationSpec(scale=scale), args.sigmas, seed=args.seed, split=split,
                     n_levels=model.config.n_levels, fallback_edges=args.fallback_edges)
    )
    out = Path(args.out) if args.out else Path(args.checkpoint).resolve().parent.parent / f"eval-{args.split}"
    out.mkdir(parents=True, exist_ok=True)
    mean = _per_image_report(model, pairs, out / "report.csv")
    (out / "report.json").write_text(mean.to_json() + "\n")
    print(mean.to_json())
    return 0


def cmd_sr(args):
    state = load_checkpoint(args.checkpoint)
    model = state.model
    cfg = model.config
    x_l = read_image(args.thermal, channels=1)
    hr = (x_l.shape[0] * cfg.scale, x_l.shape[1] * cfg.scale)
    guide = read_image(args.guide, channels=3) if args.guide else np.zeros((*hr, 3), np.float32)
    if args.edges:
        edges = load_pyramid(args.edges, cfg.n_levels)
    elif args.guide:
        edges = extract_fallback_pyramid(guide, cfg.n_levels)
    elif cfg.guide_mode == "none":
        edges = EdgePyramid([np.zeros(hr, np.float32)] * cfg.n_levels)
    else:
        raise InvalidArgument("pass --edges and/or --guide for a guided model")
    if cfg.guide_mode in ("rgb", "rgb_plus_edges") and not args.guide:
        raise InvalidArgument(f"guide_mode {cfg.guide_mode!r} needs --guide")
    from .data.dataset import SamplePair

    pair = SamplePair(x_l=x_l, guide=guide, edges=edges, x_h=np.zeros((*hr, 1), np.float32), id=Path(args.thermal).stem)
    pair.validate()
    pred = np.clip(super_resolve(model, pair), 0.0, 1.0)
    write_image(args.out, pred, bits=16)
    print(f"{args.thermal} {x_l.shape[0]}x{x_l.shape[1]} -> {args.out} {hr[0]}x{hr[1]}")
    return 0


def cmd_ablate(args):
    cfg = load_run_config(args.config)
    matrix = bench_mod.MATRICES[args.matrix]()
    if args.bicubic:
        matrix = [bench_mod.BICUBIC, *matrix]
    root = cfg.data.root
    train_pairs = _pairs(cfg, _split_or_none(root, cfg.data.train_split), cfg.train.seed, cfg.data.patch)
    test_split = _split_or_none(root, cfg.data.val_split)
    test_pairs = _pairs(cfg, test_split, cfg.train.seed, None) if test_split else train_pairs
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench_id = args.bench_id or args.matrix
    (out / bench_id).mkdir(parents=True, exist_ok=True)
    (out / bench_id / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    report = bench_mod.run_bench(matrix, train_pairs, test_pairs, cfg.model, cfg.train, cfg.loss,
                                 out_dir=out, bench_id=bench_id)
    print(report.to_markdown())
    return 0


def cmd_gradcheck(args):
    results = gc.run_all(seed=args.seed)
    ok = True
    for r in results:
        ok &= r.passed
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<12} max rel err {r.max_rel_error:.3e}  ({r.checked} checked)")
    worst = max(r.max_rel_error for r in results)
    print(f"max relative error {worst:.3e} (tolerance {gc.TOLERANCE:g})")
    return 0 if ok else EXIT_NUMERIC


# -- parser -------------------------------------------------------------------


def _sigma_list(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad sigma list {text!r}") from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="pagsr", description=__doc__.strip().splitlines()[0], formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract-edges", help="write fallback edge pyramids for visible images", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="visible image or directory of images")
    p.add_argument("--out", required=True, help="edges directory (one subdirectory per image)")
    p.add_argument("--levels", type=int, default=DEFAULT_LEVELS, help="number of pyramid levels")
    p.set_defaults(func=cmd_extract_edges)

    p = sub.add_parser("degrade", help="blur-downscale a high-resolution thermal image", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="high-resolution thermal image")
    p.add_argument("--sigma", type=float, default=0.0, help="Gaussian blur std-dev in pixels")
    p.add_argument("--scale", type=int, default=4, help="downsampling factor (power of two)")
    p.add_argument("--out", required=True, help="output low-resolution PNG")
    p.add_argument("--force", action="store_true", help="allow sigma outside [0, 4]")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("synth", help="write a procedural thermal/visible dataset", formatter_class=fmt)
    p.add_argument("--out", required=True, help="dataset root")
    p.add_argument("--count", type=int, default=4, help="number of scenes")
    p.add_argument("--height", type=int, default=256, help="HR height")
    p.add_argument("--width", type=int, default=320, help="HR width")
    p.add_argument("--levels", type=int, default=DEFAULT_LEVELS, help="edge levels")
    p.add_argument("--test", type=int, default=1, help="scenes in the test split")
    p.add_argument("--seed", type=int, default=0, help="scene seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a JSON run config", formatter_class=fmt)
    p.add_argument("--config", required=True, help="run config (JSON)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--resume", action="store_true", help="continue from <out>/checkpoints/last.ckpt")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True, help="checkpoint archive")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--split", default="test", help="split manifest name")
    p.add_argument("--sigmas", type=_sigma_list, default=list(DEFAULT_SIGMAS), help="comma-separated blur sigmas")
    p.add_argument("--seed", type=int, default=0, help="dataset order seed")
    p.add_argument("--fallback-edges", action="store_true", help="compute edge maps instead of reading them")
    p.add_argument("--out", default=None, help="report directory (default: <run>/eval-<split>)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sr", help="super-resolve one thermal image", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True, help="checkpoint archive")
    p.add_argument("--thermal", required=True, help="low-resolution thermal image")
    p.add_argument("--edges", default=None, help="directory with level<i>.png edge maps")
    p.add_argument("--guide", default=None, help="visible guide image (needed for rgb modes)")
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("ablate", help="run an ablation matrix", formatter_class=fmt)
    p.add_argument("--matrix", choices=sorted(bench_mod.MATRICES), required=True, help="which ablation")
    p.add_argument("--config", required=True, help="run config (JSON) supplying data, base model and budget")
    p.add_argument("--out", default="runs", help="parent directory for runs/<bench-id>/<case>/")
    p.add_argument("--bench-id", default=None, help="bench directory name (default: matrix name)")
    p.add_argument("--bicubic", action="store_true", help="add the bicubic baseline row")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks", formatter_class=fmt)
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PagSrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
