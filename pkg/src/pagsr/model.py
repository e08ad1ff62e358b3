"""PAG-SR network: a dense-block thermal SR trunk with edge-guided fusion.

Data flow for a 2**k upscale, ``n`` edge levels and width ``w``::

    X_1     = conv_in(x_l)
    G       = avgpool_{2**k}(C_edge * guide_stack)              (w channels, LR size)
    X_{i+1} = D_i(X_i) + [i in positions] * fus_i(G)           i = 1 .. n+1
    X_up    = (deconv4x4/2 + ReLU) applied k times to X_{n+1}
    x_sr    = C * X_up + bicubic(x_l, 2**k)

Parameter names follow ``conv_in.*``, ``trunk.D<i>.conv<j>.*``,
``trunk.D<i>.fuse.*``, ``cedge.*``, ``fus.<i>.dense.*``, ``fus.<i>.att.*``,
``up.<s>.*`` and ``final.*``.
"""

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data.degrade import upsample_bicubic
from .edges import stack
from .errors import InvalidArgument, InvalidConfig, NumericFailure

GUIDE_MODES = ("edges", "rgb", "rgb_plus_edges", "none")


@dataclass(frozen=True)
class ModelConfig:
    scale_exp: int = 2
    width: int = 32
    n_levels: int = 5
    fusion_positions: tuple = None  # None: every level (empty when guide_mode is "none")
    guide_mode: str = "edges"
    use_attention: bool = True
    use_dense_fusion: bool = True
    use_edge_features: bool = True  # False: pooled raw guide through a 1x1 conv, no fusion sub-blocks
    dense_layers: int = 2

    def __post_init__(self):
        if self.guide_mode not in GUIDE_MODES:
            raise InvalidConfig(f"guide_mode must be one of {GUIDE_MODES}, got {self.guide_mode!r}")
        if not isinstance(self.scale_exp, int) or self.scale_exp < 1:
            raise InvalidConfig(f"scale_exp must be an integer >= 1, got {self.scale_exp}")
        if self.width < 1 or self.n_levels < 1 or self.dense_layers < 1:
            raise InvalidConfig("width, n_levels and dense_layers must be >= 1")
        if self.fusion_positions is None:
            positions = () if self.guide_mode == "none" else tuple(range(1, self.n_levels + 1))
        else:
            positions = tuple(sorted({int(p) for p in self.fusion_positions}))
        object.__setattr__(self, "fusion_positions", positions)
        if self.guide_mode == "none" and positions:
            raise InvalidConfig("guide_mode 'none' cannot have fusion positions")
        if any(p < 1 or p > self.n_levels for p in positions):
            raise InvalidConfig(f"fusion positions {positions} outside 1..{self.n_levels}")

    @property
    def scale(self):
        return 2**self.scale_exp

    @property
    def guide_channels(self):
        return {"edges": self.n_levels, "rgb": 3, "rgb_plus_edges": self.n_levels + 3, "none": 0}[self.guide_mode]

    def to_dict(self):
        d = asdict(self)
        d["fusion_positions"] = list(self.fusion_positions)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown model config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("fusion_positions") is not None:
            d["fusion_positions"] = tuple(d["fusion_positions"])
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def conv3x3(cin, cout):
    # replicate padding keeps constant maps constant and works down to 1x1 inputs
    return nn.Conv2d(cin, cout, 3, padding=1, padding_mode="replicate")


class DenseBlock(nn.Module):
    """Densely connected 3x3 conv + ReLU layers, squeezed back by a 1x1 conv."""

    def __init__(self, width, layers=2):
        super().__init__()
        self.width = width
        self.n_layers = layers
        for j in range(1, layers + 1):
            self.add_module(f"conv{j}", conv3x3(width * j, width))
        self.fuse = nn.Conv2d(width * (layers + 1), width, 1)

    def forward(self, x):
        if x.shape[1] != self.width:
            raise InvalidArgument(f"dense block expects {self.width} channels, got {x.shape[1]}")
        feats = [x]
        for j in range(1, self.n_layers + 1):
            conv = getattr(self, f"conv{j}")
            feats.append(F.relu(conv(torch.cat(feats, dim=1))))
        return self.fuse(torch.cat(feats, dim=1))


class SpatialAttention(nn.Module):
    """Single-channel gate sigmoid(conv7x7([mean_c F; max_c F])) multiplied into F."""

    def __init__(self, kernel_size=7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, padding_mode="replicate")

    def attention_map(self, x):
        stats = torch.cat([x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(stats))

    def forward(self, x):
        return x * self.attention_map(x)


class FusionBlock(nn.Module):
    def __init__(self, width, dense_layers=2, use_dense=True, use_attention=True):
        super().__init__()
        self.dense = DenseBlock(width, dense_layers) if use_dense else None
        self.att = SpatialAttention() if use_attention else None

    def forward(self, g):
        if self.dense is not None:
            g = self.dense(g)
        if self.att is not None:
            g = self.att(g)
        return g


class PagSrModel(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config
        w = config.width
        self.conv_in = conv3x3(1, w)
        self.trunk = nn.ModuleDict({f"D{i}": DenseBlock(w, config.dense_layers) for i in range(1, config.n_levels + 2)})
        if config.guide_mode != "none":
            if config.use_edge_features:
                self.cedge = conv3x3(config.guide_channels, w)
                self.fus = nn.ModuleDict(
                    {
                        str(i): FusionBlock(w, config.dense_layers, config.use_dense_fusion, config.use_attention)
                        for i in config.fusion_positions
                    }
                )
            else:
                self.cedge = nn.Conv2d(config.guide_channels, w, 1)
                self.fus = None
        else:
            self.cedge = None
            self.fus = None
        self.pool = nn.AvgPool2d(config.scale)
        self.up = nn.ModuleDict({str(s): nn.ConvTranspose2d(w, w, 4, stride=2, padding=1) for s in range(1, config.scale_exp + 1)})
        self.final = conv3x3(w, 1)
        self.check_finite = True

    def _check(self, name, t):
        if self.check_finite and not torch.isfinite(t).all():
            raise NumericFailure(f"non-finite values after block {name}")
        return t

    def edge_features(self, guide):
        """G_edges: C_edge applied at guide resolution, then average-pooled to LR size."""
        if self.cedge is None:
            raise InvalidConfig("model was built without guidance")
        if guide.shape[1] != self.config.guide_channels:
            raise InvalidArgument(f"guide has {guide.shape[1]} channels, model expects {self.config.guide_channels}")
        if self.config.use_edge_features:
            return self.pool(self.cedge(guide))
        return self.cedge(self.pool(guide))

    def forward(self, x_l, guide=None):
        cfg = self.config
        s = cfg.scale
        if x_l.dim() != 4 or x_l.shape[1] != 1:
            raise InvalidArgument(f"x_l must be (N, 1, h, w), got {tuple(x_l.shape)}")
        g = None
        if cfg.guide_mode != "none":
            if guide is None:
                raise InvalidArgument(f"guide_mode {cfg.guide_mode!r} requires a guide tensor")
            if tuple(guide.shape[-2:]) != (x_l.shape[-2] * s, x_l.shape[-1] * s):
                raise InvalidArgument(
                    f"guide {tuple(guide.shape[-2:])} is not {s}x the input {tuple(x_l.shape[-2:])}"
                )
            g = self._check("cedge", self.edge_features(guide))
        x = self._check("conv_in", self.conv_in(x_l))
        for i in range(1, cfg.n_levels + 2):
            y = self.trunk[f"D{i}"](x)
            if g is not None and i in cfg.fusion_positions:
                y = y + (self.fus[str(i)](g) if self.fus is not None else g)
            x = self._check(f"trunk.D{i}", y)
        for name, deconv in self.up.items():
            x = self._check(f"up.{name}", F.relu(deconv(x)))
        residual = self._check("final", self.final(x))
        return residual + upsample_bicubic(x_l, s)


def _he_uniform_(weight, generator, fan_in):
    bound = math.sqrt(6.0 / fan_in)
    with torch.no_grad():
        weight.uniform_(-bound, bound, generator=generator)


FINAL_INIT_SCALE = 0.1


def build_model(config, seed=0):
    """Construct a model with He-uniform kernels and zero biases from ``seed``.

    The final conv's bound is shrunk by FINAL_INIT_SCALE so training starts
    close to the bicubic skip connection instead of far from it.
    """
    if not isinstance(config, ModelConfig):
        raise InvalidConfig(f"expected ModelConfig, got {type(config).__name__}")
    model = PagSrModel(config)
    gen = torch.Generator().manual_seed(int(seed))
    for module in model.modules():
        if isinstance(module, nn.ConvTranspose2d):
            # each output pixel of a stride-2 4x4 deconv sees 2x2 taps per input channel
            _he_uniform_(module.weight, gen, module.in_channels * 4)
        elif isinstance(module, nn.Conv2d):
            _he_uniform_(module.weight, gen, module.in_channels * module.kernel_size[0] * module.kernel_size[1])
        else:
            continue
        nn.init.zeros_(module.bias)
    with torch.no_grad():
        model.final.weight.mul_(FINAL_INIT_SCALE)
    return model


def parameter_count(model):
    return sum(p.numel() for p in model.parameters())


def guide_stack(pair, mode, n_levels=None):
    """Channel stack fed to C_edge for one SamplePair, as an H x W x C array."""
    if mode == "none":
        return None
    edges = stack(pair.edges)
    if n_levels is not None and edges.shape[2] != n_levels:
        raise InvalidArgument(f"pair has {edges.shape[2]} edge levels, model expects {n_levels}")
    if mode == "edges":
        return edges
    if mode == "rgb":
        return pair.guide
    return np.concatenate([pair.guide, edges], axis=2)


def to_tensor(img, dtype=torch.float32):
    """H x W x C (or list thereof) -> N x C x H x W tensor."""
    if isinstance(img, (list, tuple)):
        return torch.cat([to_tensor(i, dtype) for i in img], dim=0)
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1))).to(dtype).unsqueeze(0)


def to_image(t):
    """First item of an N x C x H x W tensor as an H x W x C float64 array."""
    return t[0].detach().to(torch.float64).permute(1, 2, 0).cpu().numpy()


def batch_tensors(pairs, config, dtype=torch.float32):
    x_l = to_tensor([p.x_l for p in pairs], dtype)
    x_h = to_tensor([p.x_h for p in pairs], dtype)
    if config.guide_mode == "none":
        return x_l, None, x_h
    guide = to_tensor([guide_stack(p, config.guide_mode, config.n_levels) for p in pairs], dtype)
    return x_l, guide, x_h


@torch.no_grad()
def super_resolve(model, pair):
    """Super-resolve one SamplePair; returns an unclamped H x W x 1 array."""
    x_l, guide, _ = batch_tensors([pair], model.config, next(model.parameters()).dtype)
    return to_image(model(x_l, guide))
