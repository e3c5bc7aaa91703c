"""Stacked LSTM encoder and shallow decoder with hand-written backprop.

The recurrence uses one input matrix ``W_y`` shared by all four gates:

    a_k = W_k h_{t-1} + W_y y_t + b_k          k in {o, f, i, g}
    c_t = sig(a_f) * c_{t-1} + sig(a_i) * tanh(a_g)
    h_t = sig(a_o) * tanh(c_t)

With ``split_input_weights`` each gate gets its own input matrix and
``W_y`` has shape ``(4, p, in)`` ordered ``o, f, i, g``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bpdn import RecoveryCache, SolverConfig, recover_batch
from .errors import NonFiniteGradientError, ShapeMismatchError
from .loss import LossWeights, loss_and_grad
from .rng import stream

GATES = ("o", "f", "i", "g")
PARAM_MAGIC = b"CSSP"


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


@dataclass
class LstmLayerParams:
    W_o: np.ndarray
    W_f: np.ndarray
    W_i: np.ndarray
    W_g: np.ndarray
    W_y: np.ndarray
    b_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_g: np.ndarray
    dropout_rate: float = 0.0

    @property
    def hidden_size(self) -> int:
        return self.W_o.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_y.shape[-1]

    @property
    def split_input(self) -> bool:
        return self.W_y.ndim == 3

    def input_weight(self, gate: str) -> np.ndarray:
        return self.W_y[GATES.index(gate)] if self.split_input else self.W_y

    def tensors(self) -> dict:
        return {k: getattr(self, k) for k in
                ("W_o", "W_f", "W_i", "W_g", "W_y", "b_o", "b_f", "b_i", "b_g")}


@dataclass
class DecoderParams:
    weights: list
    biases: list
    final_activation: str = "linear"

    def tensors(self) -> dict:
        out = {}
        for j, (W, b) in enumerate(zip(self.weights, self.biases), start=1):
            out[f"W{j}"] = W
            out[f"b{j}"] = b
        return out


@dataclass
class ModelParams:
    lstm_layers: list
    decoder: DecoderParams

    @property
    def hidden_size(self) -> int:
        return self.lstm_layers[0].hidden_size

    @property
    def sensors(self) -> int:
        return self.lstm_layers[0].input_dim

    @property
    def state_dim(self) -> int:
        return self.decoder.weights[-1].shape[0]

    def named(self) -> dict:
        """Every tensor under a stable name, in declaration order."""
        out = {}
        for k, layer in enumerate(self.lstm_layers):
            for name, t in layer.tensors().items():
                out[f"lstm{k}.{name}"] = t
        for name, t in self.decoder.tensors().items():
            out[f"decoder.{name}"] = t
        return out

    def with_tensors(self, tensors: dict) -> "ModelParams":
        """Copy of the structure holding ``tensors`` (keyed as in :meth:`named`)."""
        layers = []
        for k, layer in enumerate(self.lstm_layers):
            kw = {n: tensors[f"lstm{k}.{n}"] for n in layer.tensors()}
            layers.append(replace(layer, **kw))
        nd = len(self.decoder.weights)
        dec = DecoderParams(
            [tensors[f"decoder.W{j}"] for j in range(1, nd + 1)],
            [tensors[f"decoder.b{j}"] for j in range(1, nd + 1)],
            self.decoder.final_activation,
        )
        return ModelParams(layers, dec)

    def copy(self) -> "ModelParams":
        return self.with_tensors({k: v.copy() for k, v in self.named().items()})

    def zeros_like(self) -> "ModelParams":
        return self.with_tensors({k: np.zeros_like(v) for k, v in self.named().items()})


def init_params(sensors: int, hidden_size: int, hidden_layers: int, state_dim: int,
                decoder_dims=(350, 400), seed: int = 0, final_activation: str = "linear",
                split_input_weights: bool = False, dropout: float = 0.0) -> ModelParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases."""
    if final_activation not in ("linear", "relu"):
        raise ValueError("final_activation must be 'linear' or 'relu'")
    if not 0.0 <= dropout < 1.0:
        raise ValueError("dropout must lie in [0, 1)")
    rng = stream(seed, "init")
    p = hidden_size

    def u(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    layers = []
    for k in range(hidden_layers):
        in_dim = sensors if k == 0 else p
        wy_shape = (4, p, in_dim) if split_input_weights else (p, in_dim)
        layers.append(LstmLayerParams(
            W_o=u((p, p), p), W_f=u((p, p), p), W_i=u((p, p), p), W_g=u((p, p), p),
            W_y=u(wy_shape, in_dim),
            b_o=np.zeros(p), b_f=np.zeros(p), b_i=np.zeros(p), b_g=np.zeros(p),
            dropout_rate=dropout,
        ))
    dims = [p, *decoder_dims, state_dim]
    weights = [u((dims[j + 1], dims[j]), dims[j]) for j in range(len(dims) - 1)]
    biases = [np.zeros(dims[j + 1]) for j in range(len(dims) - 1)]
    return ModelParams(layers, DecoderParams(weights, biases, final_activation))


# ---------------------------------------------------------------- forward


def lstm_step(y_t, h_prev, c_prev, params: LstmLayerParams, _cache: list | None = None):
    """One recurrence step; works on single vectors or ``(B, dim)`` batches."""
    y_t = np.asarray(y_t, dtype=np.float64)
    if y_t.shape[-1] != params.input_dim or h_prev.shape[-1] != params.hidden_size:
        raise ShapeMismatchError(
            f"step expects input {params.input_dim}, hidden {params.hidden_size}; "
            f"got {y_t.shape[-1]}, {h_prev.shape[-1]}"
        )
    if params.split_input:
        a = {g: h_prev @ getattr(params, f"W_{g}").T + y_t @ params.input_weight(g).T
             + getattr(params, f"b_{g}") for g in GATES}
    else:
        xy = y_t @ params.W_y.T
        a = {g: h_prev @ getattr(params, f"W_{g}").T + xy + getattr(params, f"b_{g}")
             for g in GATES}
    so, sf, si = sigmoid(a["o"]), sigmoid(a["f"]), sigmoid(a["i"])
    tg = np.tanh(a["g"])
    c_t = sf * c_prev + si * tg
    tc = np.tanh(c_t)
    h_t = so * tc
    if _cache is not None:
        _cache.append((y_t, h_prev, c_prev, so, sf, si, tg, tc))
    return h_t, c_t


def _layer_forward(xs, layer: LstmLayerParams, cache: list | None):
    B, l, _ = xs.shape
    p = layer.hidden_size
    h = np.zeros((B, p))
    c = np.zeros((B, p))
    hs = np.empty((B, l, p))
    for t in range(l):
        h, c = lstm_step(xs[:, t], h, c, layer, cache)
        hs[:, t] = h
    return hs


def _dropout_mask(shape, rate, rng):
    if rate <= 0.0:
        return None
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _encode_batch(xs, params: ModelParams, mode: str, rng, caches: list | None):
    if xs.shape[-1] != params.sensors:
        raise ShapeMismatchError(f"expected {params.sensors} sensors, got {xs.shape[-1]}")
    masks = []
    n_layers = len(params.lstm_layers)
    for k, layer in enumerate(params.lstm_layers):
        cache = [] if caches is not None else None
        hs = _layer_forward(xs, layer, cache)
        if caches is not None:
            caches.append(cache)
        mask = None
        if mode == "train" and k < n_layers - 1:
            mask = _dropout_mask(hs.shape, layer.dropout_rate, rng)
            if mask is not None:
                hs = hs * mask
        masks.append(mask)
        xs = hs
    return xs[:, -1], masks


def encode(sequence, params: ModelParams, mode: str = "eval", rng_seed: int = 0) -> np.ndarray:
    """Final hidden state of the last LSTM layer for an ``(l, m)`` window.

    A ``(B, l, m)`` batch returns ``(B, p)``.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    single = seq.ndim == 2
    xs = seq[None] if single else seq
    if xs.ndim != 3 or xs.shape[1] < 1:
        raise ShapeMismatchError(f"expected (l, m) or (B, l, m) input, got {seq.shape}")
    h, _ = _encode_batch(xs, params, mode, stream(rng_seed, "dropout"), None)
    return h[0] if single else h


def decode(h, params: DecoderParams, _cache: list | None = None) -> np.ndarray:
    """ReLU between layers; the last layer is linear or ReLU per config."""
    a = np.asarray(h, dtype=np.float64)
    if a.shape[-1] != params.weights[0].shape[1]:
        raise ShapeMismatchError(
            f"decoder expects input {params.weights[0].shape[1]}, got {a.shape[-1]}")
    last = len(params.weights) - 1
    for j, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W.T + b
        if _cache is not None:
            _cache.append((a, z))
        a = z if (j == last and params.final_activation == "linear") else np.maximum(z, 0.0)
    return a


def forward(batch, params: ModelParams, recovery: bool = False, solver: SolverConfig | None = None,
            missing=None, cache: RecoveryCache | None = None, mode: str = "eval",
            rng: np.random.Generator | None = None) -> np.ndarray:
    """``(B, l, m)`` windows to ``(B, n)`` states, optionally recovering gaps first."""
    xs = np.asarray(batch, dtype=np.float64)
    if recovery:
        xs = recover_batch(xs, solver or SolverConfig(), missing=missing, cache=cache)
    if rng is None:
        rng = stream(0, "dropout")
    h, _ = _encode_batch(xs, params, mode, rng, None)
    return decode(h, params.decoder)


# ---------------------------------------------------------------- backward


def _layer_backward(cache, layer: LstmLayerParams, dH, grads: dict, need_input_grad: bool):
    B, l, p = dH.shape
    dW = {g: np.zeros((p, p)) for g in GATES}
    db = {g: np.zeros(p) for g in GATES}
    dWy = np.zeros_like(layer.W_y)
    dX = np.zeros((B, l, layer.input_dim)) if need_input_grad else None
    dh_next = np.zeros((B, p))
    dc_next = np.zeros((B, p))
    for t in range(l - 1, -1, -1):
        y_t, h_prev, c_prev, so, sf, si, tg, tc = cache[t]
        dh = dH[:, t] + dh_next
        dc = dh * so * (1.0 - tc * tc) + dc_next
        da = {
            "o": dh * tc * so * (1.0 - so),
            "f": dc * c_prev * sf * (1.0 - sf),
            "i": dc * tg * si * (1.0 - si),
            "g": dc * si * (1.0 - tg * tg),
        }
        dc_next = dc * sf
        dh_next = np.zeros((B, p))
        for g in GATES:
            dW[g] += da[g].T @ h_prev
            db[g] += da[g].sum(axis=0)
            dh_next += da[g] @ getattr(layer, f"W_{g}")
        if layer.split_input:
            for k, g in enumerate(GATES):
                dWy[k] += da[g].T @ y_t
                if need_input_grad:
                    dX[:, t] += da[g] @ layer.W_y[k]
        else:
            da_sum = da["o"] + da["f"] + da["i"] + da["g"]
            dWy += da_sum.T @ y_t
            if need_input_grad:
                dX[:, t] = da_sum @ layer.W_y
    for g in GATES:
        grads[f"W_{g}"] = dW[g]
        grads[f"b_{g}"] = db[g]
    grads["W_y"] = dWy
    return dX


def backward(batch, targets, params: ModelParams, weights: LossWeights, mode: str = "eval",
             rng: np.random.Generator | None = None):
    """Exact gradients of the training loss for already-recovered windows.

    Returns ``(grads, loss, parts)``; ``grads`` has the structure of
    ``params``. Recovery is a fixed preprocessing step and receives no
    gradient.
    """
    xs = np.asarray(batch, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if rng is None:
        rng = stream(0, "dropout")
    caches: list = []
    h, masks = _encode_batch(xs, params, mode, rng, caches)
    dec_cache: list = []
    out = decode(h, params.decoder, dec_cache)
    if out.shape != targets.shape:
        raise ShapeMismatchError(f"targets {targets.shape} do not match output {out.shape}")
    loss, parts, d_out = loss_and_grad(out, targets, weights, params)

    named = {}
    dec = params.decoder
    last = len(dec.weights) - 1
    da = d_out
    for j in range(last, -1, -1):
        a_in, z = dec_cache[j]
        dz = da if (j == last and dec.final_activation == "linear") else da * (z > 0)
        named[f"decoder.W{j + 1}"] = dz.T @ a_in
        named[f"decoder.b{j + 1}"] = dz.sum(axis=0)
        da = dz @ dec.weights[j]

    n_layers = len(params.lstm_layers)
    B, l = xs.shape[:2]
    dH = np.zeros((B, l, params.hidden_size))
    dH[:, -1] = da
    for k in range(n_layers - 1, -1, -1):
        layer = params.lstm_layers[k]
        layer_grads: dict = {}
        dX = _layer_backward(caches[k], layer, dH, layer_grads, need_input_grad=k > 0)
        for name, g in layer_grads.items():
            named[f"lstm{k}.{name}"] = g
        if k > 0:
            mask = masks[k - 1]
            dH = dX * mask if mask is not None else dX

    if weights.weight_decay > 0:
        for name, t in params.named().items():
            named[name] = named[name] + 2.0 * weights.weight_decay * t
    for name, g in named.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in {name}")
    return params.with_tensors(named), loss, parts


# ---------------------------------------------------------------- model wrapper


@dataclass
class ShredModel:
    """Parameters plus the recovery settings used in front of the network.

    ``recovery=False`` is the plain SHRED baseline. In ``cached`` mode
    recovered windows are memoised by content and reused across epochs;
    ``every-forward`` re-solves on each call.
    """

    params: ModelParams
    recovery: bool = False
    solver: SolverConfig = SolverConfig()
    recovery_mode: str = "cached"
    cache: RecoveryCache = field(default_factory=RecoveryCache)

    def prepare(self, inputs, missing=None) -> np.ndarray:
        if not self.recovery:
            return np.asarray(inputs, dtype=np.float64)
        cache = self.cache if self.recovery_mode == "cached" else None
        return recover_batch(inputs, self.solver, missing=missing, cache=cache)

    def predict(self, inputs, missing=None) -> np.ndarray:
        xs = self.prepare(inputs, missing)
        return forward(xs, self.params, recovery=False, mode="eval")


# ---------------------------------------------------------------- checkpoints


def save_params(path, params: ModelParams, manifest: dict | None = None) -> None:
    """Binary tensors (header of names and shapes, then LE float64 data) + text manifest."""
    path = Path(path)
    named = params.named()
    header = [PARAM_MAGIC, struct.pack("<2I", 1, len(named))]
    for name, t in named.items():
        raw = name.encode("utf-8")
        header.append(struct.pack("<H", len(raw)) + raw + struct.pack("<I", t.ndim))
        header.append(struct.pack(f"<{t.ndim}I", *t.shape))
    with open(path, "wb") as fh:
        fh.write(b"".join(header))
        for t in named.values():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    info = {
        "hidden_size": params.hidden_size,
        "hidden_layers": len(params.lstm_layers),
        "sensors": params.sensors,
        "state_dim": params.state_dim,
        "decoder_dims": ",".join(str(W.shape[0]) for W in params.decoder.weights[:-1]),
        "final_activation": params.decoder.final_activation,
        "split_input_weights": params.lstm_layers[0].split_input,
        "dropout": params.lstm_layers[0].dropout_rate,
    }
    info.update(manifest or {})
    text = "".join(f"{k}={v}\n" for k, v in info.items())
    path.with_suffix(path.suffix + ".manifest").write_text(text)


def load_params(path) -> ModelParams:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != PARAM_MAGIC:
        raise ValueError(f"{path} is not a parameter checkpoint")
    _, count = struct.unpack_from("<2I", raw, 4)
    off = 12
    shapes = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shapes[name] = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
    tensors = {}
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        tensors[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
    manifest = {}
    mpath = path.with_suffix(path.suffix + ".manifest")
    if mpath.exists():
        for line in mpath.read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                manifest[k] = v
    n_layers = 1 + max(int(k[4:k.index(".")]) for k in tensors if k.startswith("lstm"))
    n_dec = sum(1 for k in tensors if k.startswith("decoder.W"))
    dropout = float(manifest.get("dropout", 0.0))
    layers = [LstmLayerParams(**{n: tensors[f"lstm{k}.{n}"] for n in
                                 ("W_o", "W_f", "W_i", "W_g", "W_y", "b_o", "b_f", "b_i", "b_g")},
                              dropout_rate=dropout) for k in range(n_layers)]
    dec = DecoderParams([tensors[f"decoder.W{j}"] for j in range(1, n_dec + 1)],
                        [tensors[f"decoder.b{j}"] for j in range(1, n_dec + 1)],
                        manifest.get("final_activation", "linear"))
    return ModelParams(layers, dec)
