"""CoNDiP: 1-d convolutional call-sequence encoder, static-feature encoder and
feed-forward head, written directly in numpy with hand-derived gradients.

Shapes: dynamic input ``(B, T, C)`` zero-padded after ``valid_len`` steps;
static input ``(B, S)``.  Two same-padded convolutions (tanh) are masked to
the valid steps and averaged over exactly ``valid_len`` steps.  Every dense
layer except the output is followed by batch normalization and tanh; dense
layers that feed batch norm carry no bias since the BN shift replaces it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..seeding import substream

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class CondipConfig:
    n_kernels: int = 20
    kernel_width: int = 3
    n_conv: int = 2
    static_units: tuple[int, ...] = (50, 100)
    head_units: tuple[int, ...] = (100, 100)
    bn_momentum: float = 0.9
    bn_eps: float = 1e-8

    def __post_init__(self):
        self.static_units = tuple(self.static_units)
        self.head_units = tuple(self.head_units)
        if self.kernel_width % 2 != 1:
            raise ValueError("kernel_width must be odd for same padding")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 0.1
    class_weights: tuple[float, float] = (1.0, 1.0)  # (low risk, high risk)
    seed: int = 0
    early_stop_patience: int = 8
    val_fraction: float = 0.1

    def __post_init__(self):
        self.class_weights = tuple(float(w) for w in self.class_weights)
        if len(self.class_weights) != 2 or min(self.class_weights) <= 0:
            raise ValueError("class_weights must be two positive numbers")


# ---------------------------------------------------------------------------
# parameters


def bn_layers(cfg: CondipConfig) -> list[str]:
    return [f"bn_static{i}" for i in range(len(cfg.static_units))] + [f"bn_head{i}" for i in range(len(cfg.head_units))]


def init_params(cfg: CondipConfig, n_channels: int, n_static: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, unit BN scale."""

    def uni(fan_in, shape):
        b = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-b, b, size=shape)

    p: dict[str, np.ndarray] = {}
    c_in = n_channels
    for i in range(cfg.n_conv):
        fan = cfg.kernel_width * c_in
        p[f"conv{i}.W"] = uni(fan, (fan, cfg.n_kernels))
        p[f"conv{i}.b"] = np.zeros(cfg.n_kernels)
        c_in = cfg.n_kernels
    d = n_static
    for i, u in enumerate(cfg.static_units):
        p[f"static{i}.W"] = uni(d, (d, u))
        p[f"bn_static{i}.gamma"] = np.ones(u)
        p[f"bn_static{i}.beta"] = np.zeros(u)
        d = u
    d = cfg.n_kernels + (cfg.static_units[-1] if cfg.static_units else n_static)
    for i, u in enumerate(cfg.head_units):
        p[f"head{i}.W"] = uni(d, (d, u))
        p[f"bn_head{i}.gamma"] = np.ones(u)
        p[f"bn_head{i}.beta"] = np.zeros(u)
        d = u
    p["out.W"] = uni(d, (d, 1))
    p["out.b"] = np.zeros(1)
    return p


def init_running_stats(cfg: CondipConfig) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    units = list(cfg.static_units) + list(cfg.head_units)
    return {name: (np.zeros(u), np.ones(u)) for name, u in zip(bn_layers(cfg), units)}


def param_group(name: str) -> str:
    if name.startswith("conv"):
        return "conv"
    if name.startswith("bn_"):
        return "batchnorm"
    if name.startswith("static"):
        return "static"
    return "head"


# ---------------------------------------------------------------------------
# building blocks


def masked_mean(h: np.ndarray, valid_len: np.ndarray) -> np.ndarray:
    """Average over the first ``valid_len`` steps; zero when there are none."""
    t = h.shape[1]
    mask = (np.arange(t)[None, :] < valid_len[:, None]).astype(h.dtype)
    denom = np.maximum(valid_len, 1).astype(h.dtype)
    return (h * mask[:, :, None]).sum(axis=1) / denom[:, None]


def _im2col(x: np.ndarray, width: int) -> np.ndarray:
    pad = width // 2
    b, t, c = x.shape
    xp = np.zeros((b, t + 2 * pad, c))
    xp[:, pad:pad + t] = x
    return np.concatenate([xp[:, k:k + t] for k in range(width)], axis=2)


def _col2im(dcols: np.ndarray, width: int, c: int) -> np.ndarray:
    pad = width // 2
    b, t, _ = dcols.shape
    dxp = np.zeros((b, t + 2 * pad, c))
    for k in range(width):
        dxp[:, k:k + t] += dcols[:, :, k * c:(k + 1) * c]
    return dxp[:, pad:pad + t]


def _bn_forward(z, gamma, beta, running, mode, eps):
    if mode == "train":
        mu = z.mean(axis=0)
        var = z.var(axis=0)
    else:
        mu, var = running
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (z - mu) * inv_std
    return gamma * xhat + beta, (xhat, inv_std, mu, var)


def _bn_backward(dy, gamma, cache, mode):
    xhat, inv_std, _, _ = cache
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    if mode == "train":
        n = dy.shape[0]
        dz = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    else:
        dz = dxhat * inv_std
    return dz, dgamma, dbeta


# ---------------------------------------------------------------------------
# forward / backward


def forward(params, stats, cfg: CondipConfig, dynamic, valid_len, static, mode: str = "infer"):
    """Logits ``(B,)`` and a cache for :func:`backward`.

    Pure: running statistics are not modified; the batch statistics of a
    train-mode pass are left in ``cache["batch_stats"]``.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be train or infer, got {mode!r}")
    dynamic = np.asarray(dynamic, dtype=float)
    static = np.asarray(static, dtype=float)
    valid_len = np.asarray(valid_len, dtype=np.int64)
    b, t, _ = dynamic.shape
    mask = (np.arange(t)[None, :] < valid_len[:, None]).astype(float)
    cache: dict = {"mode": mode, "mask": mask, "valid_len": valid_len, "conv": [], "static": [], "head": [],
                   "batch_stats": {}}

    h = dynamic
    for i in range(cfg.n_conv):
        cols = _im2col(h, cfg.kernel_width)
        a = np.tanh(cols @ params[f"conv{i}.W"] + params[f"conv{i}.b"])
        cache["conv"].append((cols, a, h.shape[2]))
        h = a * mask[:, :, None]
    pooled = masked_mean(h, valid_len)

    def dense_stack(x, prefix, bn_prefix, n_layers):
        for i in range(n_layers):
            z = x @ params[f"{prefix}{i}.W"]
            name = f"{bn_prefix}{i}"
            y, bc = _bn_forward(z, params[f"{name}.gamma"], params[f"{name}.beta"], stats.get(name), mode, cfg.bn_eps)
            a = np.tanh(y)
            cache[prefix].append((x, bc, a))
            if mode == "train":
                cache["batch_stats"][name] = (bc[2], bc[3])
            x = a
        return x

    g = dense_stack(static, "static", "bn_static", len(cfg.static_units))
    x = np.concatenate([pooled, g], axis=1)
    x = dense_stack(x, "head", "bn_head", len(cfg.head_units))
    logits = (x @ params["out.W"] + params["out.b"])[:, 0]
    cache["pre_out"] = x
    cache["pooled"] = pooled
    return logits, cache


def sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def weighted_bce(logits, y, class_weights) -> tuple[float, np.ndarray]:
    """Mean weighted cross-entropy and its gradient w.r.t. the logits."""
    y = np.asarray(y, dtype=float)
    w = np.where(y > 0.5, class_weights[1], class_weights[0])
    with np.errstate(invalid="ignore"):
        softplus = np.logaddexp(0.0, logits)
    loss = float(np.sum(w * (softplus - y * logits)) / len(y))
    dlogits = w * (sigmoid(logits) - y) / len(y)
    return loss, dlogits


def _dense_backward(params, entries, prefix, dx, mode, grads):
    for i in reversed(range(len(entries))):
        xin, bc, a = entries[i]
        bn = f"bn_{prefix}{i}"
        dy = dx * (1.0 - a * a)
        dz, grads[f"{bn}.gamma"], grads[f"{bn}.beta"] = _bn_backward(dy, params[f"{bn}.gamma"], bc, mode)
        grads[f"{prefix}{i}.W"] = xin.T @ dz
        dx = dz @ params[f"{prefix}{i}.W"].T
    return dx


def backward(params, cfg: CondipConfig, cache, dlogits) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    mode = cache["mode"]
    d = dlogits[:, None]
    grads["out.W"] = cache["pre_out"].T @ d
    grads["out.b"] = d.sum(axis=0)
    dx = _dense_backward(params, cache["head"], "head", d @ params["out.W"].T, mode, grads)
    d_pooled = dx[:, :cfg.n_kernels]
    _dense_backward(params, cache["static"], "static", dx[:, cfg.n_kernels:], mode, grads)

    mask, valid_len = cache["mask"], cache["valid_len"]
    denom = np.maximum(valid_len, 1).astype(float)
    dh = d_pooled[:, None, :] * mask[:, :, None] / denom[:, None, None]
    for i in reversed(range(cfg.n_conv)):
        cols, a, c_in = cache["conv"][i]
        dz = dh * mask[:, :, None] * (1.0 - a * a)
        kdim = cols.shape[2]
        grads[f"conv{i}.W"] = cols.reshape(-1, kdim).T @ dz.reshape(-1, dz.shape[2])
        grads[f"conv{i}.b"] = dz.sum(axis=(0, 1))
        dcols = dz @ params[f"conv{i}.W"].T
        dh = _col2im(dcols, cfg.kernel_width, c_in)
    return grads


def loss_and_grads(params, stats, cfg, batch, class_weights, mode="train"):
    dynamic, valid_len, static, y = batch
    logits, cache = forward(params, stats, cfg, dynamic, valid_len, static, mode)
    loss, dlogits = weighted_bce(logits, y, class_weights)
    return loss, backward(params, cfg, cache, dlogits), cache


# ---------------------------------------------------------------------------
# model object


@dataclass
class Standardizer:
    static_mean: np.ndarray
    static_std: np.ndarray
    dyn_mean: np.ndarray
    dyn_std: np.ndarray

    @classmethod
    def fit(cls, dynamic, valid_len, static) -> "Standardizer":
        smean, sstd = static.mean(axis=0), static.std(axis=0)
        t = dynamic.shape[1]
        rows = dynamic[np.arange(t)[None, :] < valid_len[:, None]]
        if len(rows):
            dmean, dstd = rows.mean(axis=0), rows.std(axis=0)
        else:
            dmean, dstd = np.zeros(dynamic.shape[2]), np.ones(dynamic.shape[2])
        return cls(smean, np.where(sstd > 0, sstd, 1.0), dmean, np.where(dstd > 0, dstd, 1.0))

    @classmethod
    def identity(cls, n_channels: int, n_static: int) -> "Standardizer":
        return cls(np.zeros(n_static), np.ones(n_static), np.zeros(n_channels), np.ones(n_channels))

    def apply(self, dynamic, valid_len, static):
        t = dynamic.shape[1]
        mask = (np.arange(t)[None, :] < valid_len[:, None])[:, :, None]
        dyn = np.where(mask, (dynamic - self.dyn_mean) / self.dyn_std, 0.0)
        return dyn, (static - self.static_mean) / self.static_std


class CondipModel:
    kind = "condip"

    def __init__(self, cfg: CondipConfig, params, stats, scaler: Standardizer, train_cfg: TrainConfig | None = None):
        self.cfg = cfg
        self.params = params
        self.stats = stats
        self.scaler = scaler
        self.train_cfg = train_cfg or TrainConfig()
        self.curve: list[tuple[float, float]] = []

    @classmethod
    def initialize(cls, cfg: CondipConfig, n_channels: int, n_static: int, seed: int = 0) -> "CondipModel":
        params = init_params(cfg, n_channels, n_static, substream(seed, "condip", "init"))
        return cls(cfg, params, init_running_stats(cfg), Standardizer.identity(n_channels, n_static))

    def _inputs(self, data):
        dyn, st = self.scaler.apply(data.dynamic, data.valid_len, data.nn_static())
        return dyn, data.valid_len, st

    def logits(self, data, mode: str = "infer") -> np.ndarray:
        dyn, vl, st = self._inputs(data)
        return forward(self.params, self.stats, self.cfg, dyn, vl, st, mode)[0]

    def predict_proba(self, data) -> np.ndarray:
        return sigmoid(self.logits(data, "infer"))

    def calibrate_batchnorm(self, data) -> None:
        """Set running statistics to the batch statistics of ``data``."""
        dyn, vl, st = self._inputs(data)
        _, cache = forward(self.params, self.stats, self.cfg, dyn, vl, st, "train")
        self.stats = {k: (m.copy(), v.copy()) for k, (m, v) in cache["batch_stats"].items()}

    def fit(self, data, val=None) -> "CondipModel":
        condip_train(self, data, val, self.train_cfg)
        return self

    def meta(self) -> dict:
        return {"config": asdict(self.cfg), "train_config": asdict(self.train_cfg), "curve": self.curve}

    def arrays(self) -> dict:
        out = {f"param/{k}": v for k, v in self.params.items()}
        for k, (m, v) in self.stats.items():
            out[f"stats/{k}/mean"] = m
            out[f"stats/{k}/var"] = v
        for k in ("static_mean", "static_std", "dyn_mean", "dyn_std"):
            out[f"scaler/{k}"] = getattr(self.scaler, k)
        return out

    @classmethod
    def from_parts(cls, meta: dict, arrays: dict) -> "CondipModel":
        cfg = CondipConfig(**meta["config"])
        params = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
        stats = {name: (arrays[f"stats/{name}/mean"], arrays[f"stats/{name}/var"]) for name in bn_layers(cfg)}
        scaler = Standardizer(*(arrays[f"scaler/{k}"] for k in ("static_mean", "static_std", "dyn_mean", "dyn_std")))
        tc = meta.get("train_config") or {}
        model = cls(cfg, params, stats, scaler, TrainConfig(**tc) if tc else None)
        model.curve = [tuple(c) for c in meta.get("curve", [])]
        return model


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for s in range(0, n, batch_size):
        idx = perm[s:s + batch_size]
        if len(idx) >= 2:  # batch norm needs at least two samples
            yield np.sort(idx)


def condip_train(model: CondipModel, data, val=None, tc: TrainConfig | None = None) -> list[tuple[float, float]]:
    """Mini-batch gradient descent with seeded shuffling and early stopping.

    Without ``val`` a seeded ``tc.val_fraction`` of ``data`` is held out.  The
    parameters with the lowest validation loss are kept.  Returns the
    (train loss, validation loss) curve, one entry per epoch.
    """
    tc = tc or model.train_cfg
    model.train_cfg = tc
    if val is None and tc.val_fraction > 0 and len(data) >= 10:
        perm = substream(tc.seed, "condip", "val").permutation(len(data))
        n_val = max(2, int(round(tc.val_fraction * len(data))))
        val, data = data.subset(np.sort(perm[:n_val])), data.subset(np.sort(perm[n_val:]))
    model.scaler = Standardizer.fit(data.dynamic, data.valid_len, data.nn_static())
    dyn, vl, st = model._inputs(data)
    y = data.y.astype(float)
    if val is not None:
        vdyn, vvl, vst = model._inputs(val)

    mom = model.cfg.bn_momentum
    best = (math.inf, None, None)
    since_best = 0
    curve = []
    for epoch in range(tc.epochs):
        rng = substream(tc.seed, "condip", "shuffle", epoch)
        total, count = 0.0, 0
        for idx in _batches(len(y), tc.batch_size, rng):
            loss, grads, cache = loss_and_grads(
                model.params, model.stats, model.cfg, (dyn[idx], vl[idx], st[idx], y[idx]), tc.class_weights
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} in epoch {epoch}; lower the learning rate")
            for k, g in grads.items():
                model.params[k] = model.params[k] - tc.learning_rate * g
            for k, (m, v) in cache["batch_stats"].items():
                rm, rv = model.stats[k]
                model.stats[k] = (mom * rm + (1 - mom) * m, mom * rv + (1 - mom) * v)
            total += loss * len(idx)
            count += len(idx)
        train_loss = total / max(count, 1)
        if val is not None:
            logits = forward(model.params, model.stats, model.cfg, vdyn, vvl, vst, "infer")[0]
            val_loss = weighted_bce(logits, val.y, tc.class_weights)[0]
        else:
            val_loss = train_loss
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"validation loss became {val_loss} in epoch {epoch}")
        curve.append((train_loss, val_loss))
        log.debug("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
        if val_loss < best[0]:
            best = (val_loss, {k: v.copy() for k, v in model.params.items()}, dict(model.stats))
            since_best = 0
        else:
            since_best += 1
            if since_best >= tc.early_stop_patience:
                break
    if best[1] is not None:
        model.params, model.stats = best[1], best[2]
    model.curve = curve
    return curve
