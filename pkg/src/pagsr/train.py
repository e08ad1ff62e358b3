"""Adam training loop, validation and checkpointing."""

import io
import json
import logging
import zipfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError, InvalidArgument, InvalidConfig, NumericFailure
from .metrics import LossWeights, MetricReport, evaluate, loss_terms
from .model import ModelConfig, PagSrModel, batch_tensors, build_model, super_resolve

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pagsr-checkpoint"
CHECKPOINT_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    steps: int = 1000
    batch: int = 8
    seed: int = 0
    val_every: int = 0  # 0 disables periodic validation
    checkpoint_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.lr < 0:
            raise InvalidConfig(f"lr must be >= 0, got {self.lr}")
        if self.steps < 1:
            raise InvalidConfig(f"steps must be >= 1, got {self.steps}")
        if self.batch < 1:
            raise InvalidConfig(f"batch must be >= 1, got {self.batch}")
        if self.val_every < 0 or self.checkpoint_every < 0:
            raise InvalidConfig("val_every and checkpoint_every must be >= 0")

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidConfig(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainState:
    model: PagSrModel
    optimizer: torch.optim.Adam
    train_config: TrainConfig
    rng: np.random.Generator
    step: int = 0
    best_val: MetricReport = None
    history: list = field(default_factory=list)


def make_optimizer(model, cfg):
    return torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps, weight_decay=0.0)


def new_state(model, train_config=TrainConfig()):
    return TrainState(
        model=model,
        optimizer=make_optimizer(model, train_config),
        train_config=train_config,
        rng=np.random.default_rng(train_config.seed),
    )


def train_step(state, batch, weights=LossWeights()):
    """One Adam update on the mean loss of ``batch``; returns (state, record)."""
    if not batch:
        raise InvalidArgument("empty batch")
    model = state.model
    dtype = next(model.parameters()).dtype
    x_l, guide, x_h = batch_tensors(batch, model.config, dtype)
    model.train()
    try:
        pred = model(x_l, guide)
    except NumericFailure as exc:
        raise NumericFailure(f"step {state.step + 1}, batch {[p.id for p in batch]}: {exc}") from exc
    l1, lgrad = loss_terms(pred, x_h)
    loss = weights.gamma1 * l1 + weights.gamma2 * lgrad
    if not torch.isfinite(loss):
        raise NumericFailure(
            f"non-finite loss at step {state.step + 1}, batch {[p.id for p in batch]}, "
            f"max |activation| {pred.detach().abs().max().item():.3g}"
        )
    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    state.optimizer.step()
    state.step += 1
    record = {"step": state.step, "loss": loss.item(), "l1": l1.item(), "lgrad": lgrad.item()}
    return state, record


def draw_batch(pairs, size, rng):
    n = len(pairs)
    idx = rng.permutation(n)[:size] if n >= size else rng.integers(0, n, size=size)
    return [pairs[i] for i in idx]


@torch.no_grad()
def validate(model, pairs, extra_metrics=None):
    model.eval()
    preds = [np.clip(super_resolve(model, p), 0.0, 1.0) for p in pairs]
    return evaluate(preds, [p.x_h for p in pairs], extra_metrics)


def fit(model, dataset, train_config, weights=LossWeights(), val_set=None, run_dir=None, state=None, on_record=None):
    """Train for ``train_config.steps`` total steps; returns (state, history).

    Validation runs every ``val_every`` steps on ``val_set`` (the training
    pairs when omitted). With ``run_dir`` set, records are appended to
    ``history.jsonl`` and checkpoints land in ``checkpoints/``.
    """
    pairs = list(dataset)
    if not pairs:
        raise InvalidArgument("dataset is empty")
    val_pairs = list(val_set) if val_set is not None else pairs
    state = state if state is not None else new_state(model, train_config)
    cfg = state.train_config
    run_dir = Path(run_dir) if run_dir is not None else None
    history_file = None
    if run_dir is not None:
        (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        history_file = open(run_dir / "history.jsonl", "a")

    def emit(record):
        state.history.append(record)
        if history_file is not None:
            history_file.write(json.dumps(record) + "\n")
            history_file.flush()
        if on_record is not None:
            on_record(record)

    try:
        while state.step < cfg.steps:
            batch = draw_batch(pairs, cfg.batch, state.rng)
            state, record = train_step(state, batch, weights)
            emit(record)
            if cfg.val_every and state.step % cfg.val_every == 0:
                report = validate(state.model, val_pairs)
                emit({"step": state.step, **report.to_dict()})
                if state.best_val is None or report.psnr > state.best_val.psnr:
                    state.best_val = report
                    if run_dir is not None:
                        save_checkpoint(state, run_dir / "checkpoints" / "best.ckpt")
            if run_dir is not None and cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
                save_checkpoint(state, run_dir / "checkpoints" / f"step_{state.step:07d}.ckpt")
        if run_dir is not None:
            save_checkpoint(state, run_dir / "checkpoints" / "last.ckpt")
    finally:
        if history_file is not None:
            history_file.close()
    return state, state.history


def _npy_bytes(arr):
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr, dtype="<f4"), allow_pickle=False)
    return buf.getvalue()


def _write(zf, name, data):
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    zf.writestr(info, data)


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def save_checkpoint(state, path):
    """Write a zip archive: JSON config/state plus little-endian float32 arrays.

    Entry order and timestamps are fixed, so identical states give identical bytes.
    """
    path = Path(path)
    model = state.model
    names = [n for n, _ in model.named_parameters()]
    opt_state = state.optimizer.state
    params = dict(model.named_parameters())
    moments = {}
    steps = {}
    for name in names:
        s = opt_state.get(params[name])
        if s:
            moments[name] = (s["exp_avg"].detach().cpu().numpy(), s["exp_avg_sq"].detach().cpu().numpy())
            steps[name] = int(s["step"].item()) if torch.is_tensor(s["step"]) else int(s["step"])
    meta = {
        "step": state.step,
        "train_config": state.train_config.to_dict(),
        "rng": _to_jsonable(state.rng.bit_generator.state),
        "best_val": state.best_val.to_dict() if state.best_val is not None else None,
        "optimizer_steps": steps,
        "parameters": names,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        with zipfile.ZipFile(tmp, "w") as zf:
            _write(zf, "format.json", json.dumps({"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION}))
            _write(zf, "config.json", model.config.to_json())
            _write(zf, "state.json", json.dumps(meta, sort_keys=True))
            for name in names:
                _write(zf, f"params/{name}.npy", _npy_bytes(params[name].detach().cpu().numpy()))
            for name, (m, v) in moments.items():
                _write(zf, f"optim/{name}.exp_avg.npy", _npy_bytes(m))
                _write(zf, f"optim/{name}.exp_avg_sq.npy", _npy_bytes(v))
        tmp.replace(path)
    except OSError as exc:
        raise CheckpointError(f"could not write checkpoint {path}: {exc}") from exc
    return path


def _read_npy(zf, name):
    return np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)


def load_checkpoint(path, config=None):
    """Restore a TrainState. ``config``, when given, must match the stored model config."""
    path = Path(path)
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot open checkpoint {path}: {exc}") from exc
    with zf:
        try:
            fmt = json.loads(zf.read("format.json"))
            stored = ModelConfig.from_dict(json.loads(zf.read("config.json")))
            meta = json.loads(zf.read("state.json"))
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
        if fmt.get("format") != CHECKPOINT_FORMAT or fmt.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format {fmt} in {path}")
        if config is not None and config != stored:
            raise InvalidConfig(f"checkpoint config {stored} does not match requested {config}")
        model = PagSrModel(stored)
        params = dict(model.named_parameters())
        if sorted(params) != sorted(meta["parameters"]):
            raise CheckpointError(f"parameter manifest of {path} does not match its config")
        train_config = TrainConfig.from_dict(meta["train_config"])
        optimizer = make_optimizer(model, train_config)
        try:
            with torch.no_grad():
                for name, p in params.items():
                    arr = _read_npy(zf, f"params/{name}.npy")
                    if arr.shape != tuple(p.shape):
                        raise CheckpointError(f"{name}: stored shape {arr.shape} != {tuple(p.shape)}")
                    p.copy_(torch.from_numpy(arr.astype(np.float32)))
            for name, n_steps in meta["optimizer_steps"].items():
                optimizer.state[params[name]] = {
                    "step": torch.tensor(float(n_steps)),
                    "exp_avg": torch.from_numpy(_read_npy(zf, f"optim/{name}.exp_avg.npy").astype(np.float32)),
                    "exp_avg_sq": torch.from_numpy(_read_npy(zf, f"optim/{name}.exp_avg_sq.npy").astype(np.float32)),
                }
        except KeyError as exc:
            raise CheckpointError(f"corrupt checkpoint {path}: missing {exc}") from exc
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng"]
    best = meta["best_val"]
    best_val = None
    if best is not None:
        best = dict(best)
        best_val = MetricReport(psnr=best.pop("psnr"), ssim=best.pop("ssim"), mse=best.pop("mse"), extra=best)
    return TrainState(
        model=model,
        optimizer=optimizer,
        train_config=train_config,
        rng=rng,
        step=meta["step"],
        best_val=best_val,
    )


def initial_state(config, seed, train_config=TrainConfig()):
    return new_state(build_model(config, seed), train_config)
