"""Ablation matrices for guidance input type and fusion components, and their runner.

Every case is trained from the same seed, on the same pairs, for the same
number of steps, then evaluated on a shared test set. Reference metrics
reported for the full-scale experiments are stored on each case for
documentation; they are never compared against.
"""

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data.degrade import upsample_bicubic
from .errors import InvalidArgument
from .metrics import LossWeights, evaluate
from .model import ModelConfig, build_model, parameter_count, to_image, to_tensor
from .plotting import plot_bench, plot_history
from .train import fit, load_checkpoint, validate

log = logging.getLogger(__name__)

CSV_COLUMNS = ["case", "psnr", "ssim", "mse", "params", "seconds", "final_loss", "error"]


@dataclass(frozen=True)
class AblationCase:
    name: str
    deltas: dict = None  # ModelConfig overrides; None marks the bicubic pseudo-case
    expected_row: tuple = None  # (psnr dB, ssim, lpips) reported at full scale, x8

    @property
    def is_baseline(self):
        return self.deltas is None

    def config(self, base):
        return replace(base, **self.deltas)


BICUBIC = AblationCase("bicubic")

_ALL5 = (1, 2, 3, 4, 5)


def table4_matrix():
    """Integration positions x guide input type (RGB, edge maps, both)."""
    rows = [
        ("pos1-rgb", (1,), "rgb", (28.05, 0.916, 0.249)),
        ("pos1-edges", (1,), "edges", (28.34, 0.909, 0.222)),
        ("pos1-3-rgb", (1, 2, 3), "rgb", (28.19, 0.916, 0.243)),
        ("pos1-3-edges", (1, 2, 3), "edges", (28.85, 0.916, 0.215)),
        ("pos1-5-rgb", _ALL5, "rgb", (28.14, 0.916, 0.258)),
        ("pos1-5-edges", _ALL5, "edges", (28.77, 0.919, 0.214)),
        ("pos1-5-rgb+edges", _ALL5, "rgb_plus_edges", (28.83, 0.915, 0.221)),
    ]
    return [
        AblationCase(
            name,
            {
                "fusion_positions": positions,
                "guide_mode": mode,
                "use_edge_features": True,
                "use_dense_fusion": True,
                "use_attention": True,
            },
            ref,
        )
        for name, positions, mode, ref in rows
    ]


def table5_matrix():
    """Fusion-module components: edge features, dense block, attention."""
    rows = [
        ("no-fusion", False, False, False, (27.95, 0.837, 0.213)),
        ("gedges", True, False, False, (28.15, 0.904, 0.223)),
        ("gedges+att", True, False, True, (28.39, 0.910, 0.214)),
        ("gedges+dense", True, True, False, (28.87, 0.907, 0.221)),
        ("full", True, True, True, (28.77, 0.919, 0.214)),
    ]
    return [
        AblationCase(
            name,
            {
                "fusion_positions": _ALL5,
                "guide_mode": "edges",
                "use_edge_features": gedges,
                "use_dense_fusion": dense,
                "use_attention": att,
            },
            ref,
        )
        for name, gedges, dense, att, ref in rows
    ]


MATRICES = {"table4": table4_matrix, "table5": table5_matrix}


@dataclass
class BenchRow:
    case: str
    metrics: object = None  # MetricReport, None when the case failed
    params: int = 0
    seconds: float = 0.0
    final_loss: float = None
    error: str = None

    def as_list(self):
        m = self.metrics
        return [
            self.case,
            m.psnr if m else "",
            m.ssim if m else "",
            m.mse if m else "",
            self.params,
            round(self.seconds, 3),
            "" if self.final_loss is None else self.final_loss,
            self.error or "",
        ]


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def row(self, case):
        return next(r for r in self.rows if r.case == case)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(r.as_list())
        return buf.getvalue()

    def to_markdown(self):
        lines = [
            "| case | PSNR (dB) | SSIM | MSE | params | seconds |",
            "|---|---:|---:|---:|---:|---:|",
        ]
        for r in self.rows:
            if r.metrics is None:
                lines.append(f"| {r.case} | error: {r.error} | | | {r.params} | {r.seconds:.1f} |")
            else:
                m = r.metrics
                lines.append(f"| {r.case} | {m.psnr:.2f} | {m.ssim:.4f} | {m.mse:.6f} | {r.params} | {r.seconds:.1f} |")
        return "\n".join(lines) + "\n"

    def to_json(self):
        return json.dumps(
            {
                "metadata": self.metadata,
                "rows": [
                    {
                        "case": r.case,
                        "metrics": r.metrics.to_dict() if r.metrics else None,
                        "params": r.params,
                        "seconds": r.seconds,
                        "final_loss": r.final_loss,
                        "error": r.error,
                    }
                    for r in self.rows
                ],
            },
            indent=2,
        )

    def write(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.csv").write_text(self.to_csv())
        (directory / "report.md").write_text(self.to_markdown())
        (directory / "report.json").write_text(self.to_json())
        plot_bench(self, directory / "bench.png")
        return directory


def bicubic_predictions(pairs):
    """Clamped bicubic upsampling through the same float32 path as the model skip connection."""
    preds = []
    for p in pairs:
        scale = p.x_h.shape[0] // p.x_l.shape[0]
        preds.append(np.clip(to_image(upsample_bicubic(to_tensor(p.x_l), scale)), 0.0, 1.0))
    return preds


def baseline_bicubic(dataset):
    pairs = list(dataset)
    return evaluate(bicubic_predictions(pairs), [p.x_h for p in pairs])


def _run_case(case, base_config, train_pairs, test_pairs, train_config, weights, case_dir):
    config = case.config(base_config)
    last = case_dir / "checkpoints" / "last.ckpt" if case_dir is not None else None
    if last is not None and last.exists():
        state = load_checkpoint(last, config)
        if state.step >= train_config.steps:
            log.info("case %s already trained, reusing %s", case.name, last)
            history = [json.loads(l) for l in (case_dir / "history.jsonl").read_text().splitlines() if l]
            return state.model, history
    model = build_model(config, train_config.seed)
    state, history = fit(model, train_pairs, train_config, weights, run_dir=case_dir)
    if case_dir is not None:
        plot_history(history, case_dir / "loss.png")
    return state.model, history


def run_bench(matrix, train_pairs, test_pairs, base_config=ModelConfig(), train_config=None, weights=LossWeights(),
              out_dir=None, bench_id="bench"):
    """Train and evaluate every case; failures become error rows."""
    from .train import TrainConfig

    train_config = train_config or TrainConfig()
    train_pairs = list(train_pairs)
    test_pairs = list(test_pairs)
    if not matrix:
        raise InvalidArgument("empty ablation matrix")
    if not train_pairs or not test_pairs:
        raise InvalidArgument("train and test sets must be nonempty")
    root = Path(out_dir) / bench_id if out_dir is not None else None
    report = BenchReport(
        metadata={
            "bench_id": bench_id,
            "scale": base_config.scale,
            "seed": train_config.seed,
            "steps": train_config.steps,
            "train_ids": [p.id for p in train_pairs],
            "test_ids": [p.id for p in test_pairs],
        }
    )
    for case in matrix:
        t0 = time.perf_counter()
        try:
            if case.is_baseline:
                row = BenchRow(case.name, metrics=baseline_bicubic(test_pairs))
            else:
                case_dir = root / case.name if root is not None else None
                model, history = _run_case(case, base_config, train_pairs, test_pairs, train_config, weights, case_dir)
                losses = [r["loss"] for r in history if "loss" in r]
                row = BenchRow(
                    case.name,
                    metrics=validate(model, test_pairs),
                    params=parameter_count(model),
                    final_loss=losses[-1] if losses else None,
                )
        except Exception as exc:  # a failed case must not stop the others
            log.exception("case %s failed", case.name)
            row = BenchRow(case.name, error=f"{type(exc).__name__}: {exc}")
        row.seconds = time.perf_counter() - t0
        report.rows.append(row)
    if root is not None:
        report.write(root)
    return report
