"""Small numpy multilayer perceptron with exact backpropagation.

Parameters live in one flat float64 vector so optimisers, soft target
updates and checkpoints treat every network the same way. The final layer
is down-scaled at initialisation (``output_gain``) so a fresh network
predicts values close to zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

HIDDEN = ("relu", "tanh")
OUTPUT = ("linear", "sigmoid", "scaled-tanh")


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple[int, ...]
    hidden: str = "relu"
    output: str = "linear"
    init_scale: float = 1.0
    output_gain: float = 1e-2
    output_scale: float = 1.0  # bound for the scaled-tanh head

    def __post_init__(self) -> None:
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 3:
            raise ValueError("an MLP needs an input width, >= 1 hidden width and an output width")
        if min(self.widths) < 1:
            raise ValueError(f"all widths must be >= 1, got {self.widths}")
        if not self.init_scale > 0:
            raise ValueError(f"init_scale must be > 0, got {self.init_scale}")
        if self.hidden not in HIDDEN:
            raise ValueError(f"unknown hidden activation {self.hidden!r}")
        if self.output not in OUTPUT:
            raise ValueError(f"unknown output activation {self.output!r}")

    @cached_property
    def slices(self) -> list[tuple[slice, tuple[int, int], slice]]:
        out, pos = [], 0
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            w = slice(pos, pos + fan_in * fan_out)
            pos = w.stop
            b = slice(pos, pos + fan_out)
            pos = b.stop
            out.append((w, (fan_in, fan_out), b))
        return out

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in zip(self.widths[:-1], self.widths[1:]))

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]


@dataclass
class MlpParams:
    spec: MlpSpec
    flat: np.ndarray

    def __post_init__(self) -> None:
        self.flat = np.asarray(self.flat, dtype=np.float64)
        if self.flat.shape != (self.spec.n_params,):
            raise ValueError(f"expected {self.spec.n_params} parameters, got {self.flat.shape}")

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into ``flat``; W has shape (fan_in, fan_out)."""
        return [(self.flat[w].reshape(shape), self.flat[b]) for w, shape, b in self.spec.slices]

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, self.flat.copy())


def init(spec: MlpSpec, seed) -> MlpParams:
    """Fan-in scaled uniform weights; the last layer is multiplied by ``output_gain``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    flat = np.empty(spec.n_params)
    last = len(spec.slices) - 1
    for i, (w, (fan_in, fan_out), b) in enumerate(spec.slices):
        bound = spec.init_scale * math.sqrt(3.0 / fan_in)
        flat[w] = rng.uniform(-bound, bound, fan_in * fan_out)
        flat[b] = rng.uniform(-bound, bound, fan_out) / math.sqrt(3.0)
        if i == last:
            flat[w] *= spec.output_gain
            flat[b] *= spec.output_gain
    return MlpParams(spec, flat)


def _as_batch(params: MlpParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.spec.n_in:
        raise ValueError(f"input width {x.shape[-1]} does not match network input {params.spec.n_in}")
    return x, single


def _out_act(spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    if spec.output == "linear":
        return z
    if spec.output == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return spec.output_scale * np.tanh(z)


def forward_cache(params: MlpParams, x) -> tuple[np.ndarray, list]:
    """Batched forward pass that also returns what :func:`vjp` needs."""
    h, _ = _as_batch(params, x)
    spec = params.spec
    cache = []
    layers = params.layers()
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        cache.append((h, z))
        if i < len(layers) - 1:
            h = np.maximum(z, 0.0) if spec.hidden == "relu" else np.tanh(z)
        else:
            h = _out_act(spec, z)
    return h, cache


def forward(params: MlpParams, x) -> np.ndarray:
    x_arr = np.asarray(x, dtype=np.float64)
    out, _ = forward_cache(params, x_arr)
    return out[0] if x_arr.ndim == 1 else out


def vjp(params: MlpParams, cache: list, d_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pull ``d_out`` (dL/d output) back to parameter and input gradients."""
    spec = params.spec
    layers = params.layers()
    grad = np.zeros_like(params.flat)
    _, z_last = cache[-1]
    if spec.output == "linear":
        delta = d_out
    elif spec.output == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * z_last))
        delta = d_out * s * (1.0 - s)
    else:
        t = np.tanh(z_last)
        delta = d_out * spec.output_scale * (1.0 - t * t)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        h_in, _ = cache[i]
        w_sl, shape, b_sl = spec.slices[i]
        grad[w_sl] = (h_in.T @ delta).ravel()
        grad[b_sl] = delta.sum(axis=0)
        d_h = delta @ W.T
        if i > 0:
            _, z_prev = cache[i - 1]
            if spec.hidden == "relu":
                delta = d_h * (z_prev > 0)
            else:
                t = np.tanh(z_prev)
                delta = d_h * (1.0 - t * t)
        else:
            d_input = d_h
    return grad, d_input


def backward(params: MlpParams, inputs, targets, mask=None) -> tuple[np.ndarray, float]:
    """Mean-squared-error loss over the batch and output dims, and its exact gradient.

    With a 0/1 ``mask`` only the selected outputs enter the mean (e.g. the
    taken action of a Q-network).
    """
    out, cache = forward_cache(params, inputs)
    targets = np.asarray(targets, dtype=np.float64).reshape(out.shape)
    if out.shape[0] == 0:
        raise ValueError("empty batch")
    diff = out - targets
    if mask is None:
        count = diff.size
    else:
        mask = np.asarray(mask, dtype=np.float64).reshape(out.shape)
        diff = diff * mask
        count = mask.sum()
    loss = float(np.sum(diff * diff) / count)
    grad, _ = vjp(params, cache, 2.0 * diff / count)
    return grad, loss


def numerical_gradient(params: MlpParams, inputs, targets, h: float = 1e-5, mask=None) -> np.ndarray:
    """Central finite differences of the :func:`backward` loss."""
    g = np.zeros_like(params.flat)
    probe = params.copy()
    for i in range(params.flat.size):
        orig = probe.flat[i]
        probe.flat[i] = orig + h
        _, up = backward(probe, inputs, targets, mask)
        probe.flat[i] = orig - h
        _, down = backward(probe, inputs, targets, mask)
        probe.flat[i] = orig
        g[i] = (up - down) / (2 * h)
    return g


# ---------------------------------------------------------------- optimisers


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    step: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimiser {self.kind!r}")


def adam(lr: float = 1e-3) -> OptimizerState:
    return OptimizerState("adam", lr)


def sgd(lr: float) -> OptimizerState:
    return OptimizerState("sgd", lr)


def apply_update(params: MlpParams, grads: np.ndarray, opt: OptimizerState) -> MlpParams:
    """Descend along ``grads`` in place and return ``params``."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.flat.shape:
        raise ValueError("gradient and parameter vectors differ in length")
    opt.step += 1
    if opt.kind == "sgd":
        params.flat -= opt.lr * grads
        return params
    if opt.m is None:
        opt.m = np.zeros_like(params.flat)
        opt.v = np.zeros_like(params.flat)
    opt.m *= opt.beta1
    opt.m += (1.0 - opt.beta1) * grads
    opt.v *= opt.beta2
    grads_sq = np.square(grads)
    grads_sq *= 1.0 - opt.beta2
    opt.v += grads_sq
    # p -= lr * m_hat / (sqrt(v_hat) + eps), evaluated with one scratch array
    denom = np.sqrt(opt.v, out=grads_sq)
    denom *= 1.0 / np.sqrt(1.0 - opt.beta2**opt.step)
    denom += opt.eps
    np.divide(opt.m, denom, out=denom)
    denom *= opt.lr / (1.0 - opt.beta1**opt.step)
    params.flat -= denom
    return params


def soft_update(target: MlpParams, source: MlpParams, tau: float) -> None:
    """``target <- tau*source + (1-tau)*target`` in place."""
    target.flat *= 1.0 - tau
    target.flat += tau * source.flat


# ---------------------------------------------------------------- checkpoints


def _header(params: MlpParams) -> dict:
    s = params.spec
    return {
        "widths": list(s.widths),
        "hidden": s.hidden,
        "output": s.output,
        "init_scale": s.init_scale,
        "output_gain": s.output_gain,
        "output_scale": s.output_scale,
        "n_params": s.n_params,
        "dtype": "<f8",
    }


def to_blob(params: MlpParams) -> bytes:
    """JSON layout header line followed by little-endian float64 parameters."""
    head = json.dumps(_header(params), sort_keys=True).encode() + b"\n"
    return head + params.flat.astype("<f8").tobytes()


def from_blob(blob: bytes) -> MlpParams:
    head, _, body = blob.partition(b"\n")
    meta = json.loads(head)
    spec = MlpSpec(
        tuple(meta["widths"]),
        meta["hidden"],
        meta["output"],
        meta["init_scale"],
        meta["output_gain"],
        meta["output_scale"],
    )
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return MlpParams(spec, flat)


def save(params: MlpParams, path) -> None:
    Path(path).write_bytes(to_blob(params))


def load(path) -> MlpParams:
    return from_blob(Path(path).read_bytes())
