"""Bidirectional GRU regressor in plain numpy.

Gates follow the common ``r, z, n`` convention::

    r = sigmoid(x Wx_r + bx_r + h Wh_r + bh_r)
    z = sigmoid(x Wx_z + bx_z + h Wh_z + bh_z)
    n = tanh(x Wx_n + bx_n + r * (h Wh_n + bh_n))
    h' = (1 - z) * n + z * h

Both directions of a layer are evaluated together: parameters carry a
leading axis of size 2 (forward, backward) and the backward direction sees
the time-reversed sequence. The regression head reads the last layer's
output at the final time index (forward and backward halves concatenated),
then applies ``Linear -> ReLU -> Linear -> sigmoid``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = "IBAM-SOH-v1"


class CheckpointError(ValueError):
    pass


class ShapeError(ValueError):
    pass


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class GruShape:
    input_dim: int = 4
    hidden: int = 96
    layers: int = 2
    head_hidden: int = 64

    @property
    def rep_dim(self) -> int:
        return 2 * self.hidden


def init_params(shape: GruShape, seed: int = 0) -> dict[str, np.ndarray]:
    """Uniform initialisation scaled by fan-in, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    H = shape.hidden
    k = 1.0 / np.sqrt(H)
    p = {}
    for layer in range(shape.layers):
        d_in = shape.input_dim if layer == 0 else 2 * H
        p[f"Wx{layer}"] = rng.uniform(-k, k, (2, d_in, 3 * H))
        p[f"Wh{layer}"] = rng.uniform(-k, k, (2, H, 3 * H))
        p[f"bx{layer}"] = rng.uniform(-k, k, (2, 3 * H))
        p[f"bh{layer}"] = rng.uniform(-k, k, (2, 3 * H))
    k1 = 1.0 / np.sqrt(shape.rep_dim)
    p["W1"] = rng.uniform(-k1, k1, (shape.rep_dim, shape.head_hidden))
    p["b1"] = rng.uniform(-k1, k1, shape.head_hidden)
    k2 = 1.0 / np.sqrt(shape.head_hidden)
    p["W2"] = rng.uniform(-k2, k2, (shape.head_hidden, 1))
    p["b2"] = np.zeros(1)
    return p


def zero_params(shape: GruShape) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in init_params(shape).items()}


def _layer_forward(x, Wx, Wh, bx, bh):
    """x: (B, T, D) -> outputs (B, T, 2H) and the cache for backprop."""
    B, T, D = x.shape
    H = Wh.shape[1]
    xs = np.stack([x, x[:, ::-1]])                                   # (2,B,T,D)
    gx = (xs.reshape(2, B * T, D) @ Wx).reshape(2, B, T, 3 * H) + bx[:, None, None]
    h = np.zeros((2, B, H), dtype=x.dtype)
    hs = np.empty((2, B, T + 1, H), dtype=x.dtype)
    hs[:, :, 0] = h
    r_all = np.empty((2, B, T, H), dtype=x.dtype)
    z_all = np.empty_like(r_all)
    n_all = np.empty_like(r_all)
    ghn_all = np.empty_like(r_all)
    for t in range(T):
        gh = h @ Wh + bh[:, None]
        g = gx[:, :, t]
        r = _sigmoid(g[..., :H] + gh[..., :H])
        z = _sigmoid(g[..., H:2 * H] + gh[..., H:2 * H])
        ghn = gh[..., 2 * H:]
        n = np.tanh(g[..., 2 * H:] + r * ghn)
        h = (1.0 - z) * n + z * h
        hs[:, :, t + 1] = h
        r_all[:, :, t], z_all[:, :, t], n_all[:, :, t], ghn_all[:, :, t] = r, z, n, ghn
    out = np.concatenate([hs[0, :, 1:], hs[1, :, :0:-1]], axis=-1)
    cache = (xs, hs, r_all, z_all, n_all, ghn_all)
    return out, cache


def _layer_backward(d_out, cache, Wx, Wh):
    xs, hs, r_all, z_all, n_all, ghn_all = cache
    _, B, T, D = xs.shape
    H = Wh.shape[1]
    dH = np.stack([d_out[..., :H], d_out[:, ::-1, H:]])            # (2,B,T,H)
    dgx = np.empty((2, B, T, 3 * H), dtype=xs.dtype)
    dWh = np.zeros_like(Wh)
    dbh = np.zeros((2, 3 * H), dtype=xs.dtype)
    dh_next = np.zeros((2, B, H), dtype=xs.dtype)
    WhT = np.swapaxes(Wh, 1, 2)
    for t in range(T - 1, -1, -1):
        dh = dH[:, :, t] + dh_next
        r, z, n, ghn = r_all[:, :, t], z_all[:, :, t], n_all[:, :, t], ghn_all[:, :, t]
        h_prev = hs[:, :, t]
        dn = dh * (1.0 - z) * (1.0 - n * n)
        dz = dh * (h_prev - n) * z * (1.0 - z)
        dr = dn * ghn * r * (1.0 - r)
        dgh = np.concatenate([dr, dz, dn * r], axis=-1)
        dgx[:, :, t] = np.concatenate([dr, dz, dn], axis=-1)
        dWh += np.swapaxes(h_prev, 1, 2) @ dgh
        dbh += dgh.sum(axis=1)
        dh_next = dh * z + dgh @ WhT
    dgx_flat = dgx.reshape(2, B * T, 3 * H)
    dWx = np.swapaxes(xs.reshape(2, B * T, D), 1, 2) @ dgx_flat
    dbx = dgx_flat.sum(axis=1)
    dxs = (dgx_flat @ np.swapaxes(Wx, 1, 2)).reshape(2, B, T, D)
    dx = dxs[0] + dxs[1][:, ::-1]
    return dx, dWx, dWh, dbx, dbh


def _dropout_mask(rng, like, rate):
    if rng is None or rate <= 0:
        return None
    return ((rng.random(like.shape) >= rate) / (1.0 - rate)).astype(like.dtype)


def forward(params, x, dropout: float = 0.0, rng: np.random.Generator | None = None):
    """Predicted SoH for a batch ``x`` of shape ``(B, T, C)``.

    Dropout (between recurrent layers and on the representation) is active
    only when ``rng`` is given. Returns ``(y_hat, cache)``.
    """
    layers = sum(1 for k in params if k.startswith("Wx"))
    h = x
    caches, masks = [], []
    for layer in range(layers):
        if layer > 0:
            m = _dropout_mask(rng, h, dropout)
            masks.append(m)
            if m is not None:
                h = h * m
        h, c = _layer_forward(h, params[f"Wx{layer}"], params[f"Wh{layer}"],
                              params[f"bx{layer}"], params[f"bh{layer}"])
        caches.append(c)
    rep = h[:, -1, :]
    m = _dropout_mask(rng, rep, dropout)
    masks.append(m)
    rep_d = rep if m is None else rep * m
    z1 = rep_d @ params["W1"] + params["b1"]
    a1 = np.maximum(z1, 0.0)
    y = _sigmoid(a1 @ params["W2"] + params["b2"])[:, 0]
    return y, (caches, masks, h, rep_d, z1, a1, y)


def backward(params, cache, dy) -> dict[str, np.ndarray]:
    """Gradients of ``sum(dy * y_hat)`` with respect to every parameter."""
    caches, masks, out, rep_d, z1, a1, y = cache
    g = {}
    dz2 = (dy * y * (1.0 - y))[:, None].astype(y.dtype)
    g["W2"] = a1.T @ dz2
    g["b2"] = dz2.sum(axis=0)
    dz1 = (dz2 @ params["W2"].T) * (z1 > 0)
    g["W1"] = rep_d.T @ dz1
    g["b1"] = dz1.sum(axis=0)
    drep = dz1 @ params["W1"].T
    if masks[-1] is not None:
        drep = drep * masks[-1]
    d_out = np.zeros_like(out)
    d_out[:, -1, :] = drep
    for layer in range(len(caches) - 1, -1, -1):
        dx, g[f"Wx{layer}"], g[f"Wh{layer}"], g[f"bx{layer}"], g[f"bh{layer}"] = \
            _layer_backward(d_out, caches[layer], params[f"Wx{layer}"],
                            params[f"Wh{layer}"])
        if layer > 0:
            m = masks[layer - 1]
            d_out = dx if m is None else dx * m
    return g


def mse_loss_and_grad(params, x, y_true, dropout=0.0, rng=None):
    y, cache = forward(params, x, dropout, rng)
    err = y - y_true
    loss = float(np.mean(err ** 2))
    return loss, backward(params, cache, 2.0 * err / err.size)


@dataclass
class SohEstimator:
    """Trained network together with its input normalisation."""

    shape: GruShape
    params: dict[str, np.ndarray]
    mean: np.ndarray
    std: np.ndarray
    capacity_Ah: float = 1.1
    dropout: float = 0.1
    meta: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)

    @property
    def n_channels(self) -> int:
        return self.shape.input_dim

    def _batch(self, features) -> np.ndarray:
        x = np.stack([f.channels for f in features])                 # (B,C,T)
        x = (x - self.mean[None, :, None]) / self.std[None, :, None]
        dtype = self.params["W2"].dtype
        return np.ascontiguousarray(np.swapaxes(x, 1, 2), dtype=dtype)

    def predict(self, features, batch_size: int = 64) -> np.ndarray:
        features = list(features)
        for f in features:
            self.check(f)
        out = [self.predict_array(self._batch(features[i:i + batch_size]))
               for i in range(0, len(features), batch_size)]
        return np.concatenate(out) if out else np.empty(0)

    def check(self, f) -> None:
        if f.channels.ndim != 2 or f.n_channels != self.n_channels:
            raise ShapeError(f"estimator expects {self.n_channels} channels, "
                             f"got array of shape {f.channels.shape}")

    def predict_array(self, x: np.ndarray) -> np.ndarray:
        """Predictions for an already normalised ``(B, T, C)`` batch."""
        return forward(self.params, x)[0]

    def to_dict(self) -> dict:
        return {
            "magic": CHECKPOINT_MAGIC,
            "shape": {"input_dim": self.shape.input_dim, "hidden": self.shape.hidden,
                      "layers": self.shape.layers,
                      "head_hidden": self.shape.head_hidden},
            "norm": {"mean": self.mean.tolist(), "std": self.std.tolist()},
            "capacity_Ah": self.capacity_Ah,
            "dtype": self.params["W2"].dtype.name,
            "dropout": self.dropout,
            "meta": self.meta,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in sorted(self.params.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SohEstimator":
        if d.get("magic") != CHECKPOINT_MAGIC:
            raise CheckpointError("not an SoH estimator checkpoint")
        try:
            shape = GruShape(**d["shape"])
            dtype = np.dtype(d.get("dtype", "float64"))
            params = {k: np.array(v["data"], dtype=dtype).reshape(v["shape"])
                      for k, v in d["params"].items()}
            expected = init_params(shape)
            if set(params) != set(expected) or any(
                    params[k].shape != expected[k].shape for k in expected):
                raise CheckpointError("parameter set does not match the declared shape")
            return cls(shape, params, np.array(d["norm"]["mean"], dtype=float),
                       np.array(d["norm"]["std"], dtype=float),
                       float(d["capacity_Ah"]), float(d.get("dropout", 0.0)),
                       d.get("meta", {}))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, CheckpointError):
                raise
            raise CheckpointError(f"malformed checkpoint: {exc}") from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "SohEstimator":
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from None
        return cls.from_dict(d)


def estimator_forward(f, est: SohEstimator, train_mode: bool = False,
                      seed: int = 0) -> float:
    """SoH of one cycle; ``train_mode`` applies dropout with a seeded mask."""
    est.check(f)
    rng = np.random.default_rng(seed) if train_mode else None
    return float(forward(est.params, est._batch([f]), est.dropout, rng)[0][0])
