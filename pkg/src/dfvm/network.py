"""Small dense networks with tanh activations.

Two architectures:

* fcnn: affine lift to the hidden width, `depth` tanh layers, affine head.
* resnet: affine lift, `depth` residual blocks of two tanh layers each
  (B(h) = tanh(W2 tanh(W1 h + b1) + b2) + h), affine head.

Parameters live in one flat float64 vector (the ParamSet); the layout of
(name, shape, offset) triples is derived from the config. Forward evaluation
always runs through the autodiff tape so there is a single arithmetic path.

emit_with_input_grad writes the input gradient of the network as ordinary
tape ops (the reverse chain rule expressed forward), which keeps losses built
from grad_x u differentiable with a single first-order backward pass.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Gradients, Tape, dtype_for, one_minus_square

_MAGIC = b"DFVMPRM1"


@dataclass(frozen=True)
class NetworkConfig:
    kind: str = "resnet"  # "fcnn" | "resnet"
    input_dim: int = 2
    width: int = 40
    depth: int = 3  # hidden layers (fcnn) or residual blocks (resnet)
    activation: str = "tanh"
    output_dim: int = 1

    def __post_init__(self):
        if self.kind not in ("fcnn", "resnet"):
            raise ValueError(f"unknown network kind {self.kind!r}")
        if self.activation != "tanh":
            raise ValueError("only tanh activation is implemented")
        if self.input_dim < 1 or self.width < 1 or self.depth < 1:
            raise ValueError("input_dim, width and depth must be positive")
        if self.output_dim != 1:
            raise ValueError("scalar outputs only")


def _layout(cfg: NetworkConfig) -> list[tuple[str, tuple]]:
    d, m = cfg.input_dim, cfg.width
    names: list[tuple[str, tuple]] = []
    if cfg.kind == "fcnn":
        names.append(("w0", (d, m)))
        names.append(("b0", (m,)))
        for k in range(1, cfg.depth):
            names.append((f"w{k}", (m, m)))
            names.append((f"b{k}", (m,)))
    else:
        names.append(("w_in", (d, m)))
        names.append(("b_in", (m,)))
        for k in range(cfg.depth):
            names.append((f"w{k}a", (m, m)))
            names.append((f"b{k}a", (m,)))
            names.append((f"w{k}b", (m, m)))
            names.append((f"b{k}b", (m,)))
    names.append(("w_out", (m, 1)))
    names.append(("b_out", (1,)))
    return names


class Network:
    """A NetworkConfig plus its parameter layout and evaluation routines."""

    def __init__(self, config: NetworkConfig):
        self.config = config
        self.layout: list[tuple[str, tuple, int]] = []
        off = 0
        for name, shape in _layout(config):
            self.layout.append((name, shape, off))
            off += int(np.prod(shape))
        self.n_params = off
        self._index = {name: (shape, off) for name, shape, off in self.layout}

    # ---- parameters ----

    def init_params(self, seed: int = 0) -> np.ndarray:
        """Glorot-style init: weights U(-1/sqrt(fan_in), +1/sqrt(fan_in)), zero biases."""
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xA11)))
        params = np.zeros(self.n_params)
        for name, shape, off in self.layout:
            if name.startswith("w"):
                bound = 1.0 / np.sqrt(shape[0])
                size = int(np.prod(shape))
                params[off:off + size] = rng.uniform(-bound, bound, size)
        return params

    def view(self, params: np.ndarray, name: str) -> np.ndarray:
        shape, off = self._index[name]
        return params[off:off + int(np.prod(shape))].reshape(shape)

    def param_leaves(self, tape: Tape, params: np.ndarray) -> dict[str, int]:
        """One leaf node per layout tensor, in layout order."""
        if params.shape != (self.n_params,):
            raise ValueError(
                f"expected flat ParamSet of length {self.n_params}, got shape {params.shape}")
        return {name: tape.leaf(self.view(params, name)) for name, _, _ in self.layout}

    def gradient_vector(self, grads: Gradients, leaves: dict[str, int]) -> np.ndarray:
        first = grads.of(leaves[self.layout[0][0]])
        out = np.empty(self.n_params, dtype=first.dtype)
        out[:first.size] = first.ravel()
        for name, shape, off in self.layout[1:]:
            out[off:off + int(np.prod(shape))] = grads.of(leaves[name]).ravel()
        return out

    # ---- tape emission ----

    def _check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ValueError(
                f"expected points of dimension {self.config.input_dim}, got shape {x.shape}")
        return x

    def emit(self, tape: Tape, leaves: dict[str, int], xn: int) -> int:
        """Forward pass; returns the node holding u, shape (n,)."""
        u, _ = self._emit_forward(tape, leaves, xn)
        return u

    def emit_with_input_grad(self, tape: Tape, leaves: dict[str, int], xn: int) -> tuple[int, int]:
        """Forward pass plus the input gradient written as tape ops.

        Returns (u, g) with u of shape (n,) and g of shape (n, input_dim).
        Cost is a small constant times the forward pass; the result stays
        differentiable w.r.t. the parameter leaves.
        """
        u, stash = self._emit_forward(tape, leaves, xn)
        cfg = self.config
        n = tape.value(xn).shape[0]
        ones = tape.leaf(np.ones((n, 1)))
        v = tape.matmul(ones, tape.transpose(leaves["w_out"]))  # (n, m)
        if cfg.kind == "fcnn":
            for k in range(cfg.depth - 1, -1, -1):
                a_k = stash[k]
                v = tape.mul(v, one_minus_square(tape, a_k))
                v = tape.matmul(v, tape.transpose(leaves[f"w{k}" if k else "w0"]))
            g = v
        else:
            for k in range(cfg.depth - 1, -1, -1):
                p_k, q_k = stash[k]
                t = tape.mul(v, one_minus_square(tape, q_k))
                t = tape.matmul(t, tape.transpose(leaves[f"w{k}b"]))
                t = tape.mul(t, one_minus_square(tape, p_k))
                t = tape.matmul(t, tape.transpose(leaves[f"w{k}a"]))
                v = tape.add(v, t)
            g = tape.matmul(v, tape.transpose(leaves["w_in"]))
        return u, g

    def _emit_forward(self, tape: Tape, leaves: dict[str, int], xn: int):
        cfg = self.config
        stash = []
        if cfg.kind == "fcnn":
            h = xn
            for k in range(cfg.depth):
                w = leaves[f"w{k}" if k else "w0"]
                b = leaves[f"b{k}" if k else "b0"]
                h = tape.tanh(tape.add(tape.matmul(h, w), b))
                stash.append(h)
        else:
            h = tape.add(tape.matmul(xn, leaves["w_in"]), leaves["b_in"])
            for k in range(cfg.depth):
                p = tape.tanh(tape.add(tape.matmul(h, leaves[f"w{k}a"]), leaves[f"b{k}a"]))
                q = tape.tanh(tape.add(tape.matmul(p, leaves[f"w{k}b"]), leaves[f"b{k}b"]))
                stash.append((p, q))
                h = tape.add(q, h)
        y = tape.add(tape.matmul(h, leaves["w_out"]), leaves["b_out"])  # (n, 1)
        u = tape.reshape(y, (tape.value(y).shape[0],))
        return u, stash

    # ---- numpy-facing evaluation ----

    def value(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        x = self._check_x(x)
        tape = Tape(dtype=dtype_for(params))
        leaves = self.param_leaves(tape, params)
        u = self.emit(tape, leaves, tape.leaf(x))
        return tape.value(u)

    def value_and_input_grad(self, params: np.ndarray, x: np.ndarray):
        x = self._check_x(x)
        tape = Tape(dtype=dtype_for(params))
        leaves = self.param_leaves(tape, params)
        u, g = self.emit_with_input_grad(tape, leaves, tape.leaf(x))
        return tape.value(u), tape.value(g)


def make_network(config: NetworkConfig) -> Network:
    return Network(config)


def init_params(config: NetworkConfig, seed: int = 0) -> np.ndarray:
    return Network(config).init_params(seed)


def eval_fcnn(config: NetworkConfig, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    if config.kind != "fcnn":
        raise ValueError("eval_fcnn called with a non-fcnn config")
    return Network(config).value(params, x)


def eval_resnet(config: NetworkConfig, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    if config.kind != "resnet":
        raise ValueError("eval_resnet called with a non-resnet config")
    return Network(config).value(params, x)


def input_gradient(net: Network, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """grad_x u via one forward and one reverse pass from the summed output.

    Valid for a whole batch at once because each row's output depends only on
    its own input row. Independent of the emitted-recurrence path in
    emit_with_input_grad, so the two can cross-check each other.
    """
    x = net._check_x(x)
    tape = Tape()
    leaves = net.param_leaves(tape, params)
    xn = tape.leaf(x)
    u = net.emit(tape, leaves, xn)
    grads = tape.backward(tape.sum(u))
    return grads.of(xn)


class NetField:
    """Adapter exposing a (network, params) pair as a plain scalar field."""

    def __init__(self, net: Network, params: np.ndarray):
        self.net = net
        self.params = params

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.net.value(self.params, x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return input_gradient(self.net, self.params, x)


def as_field(net: Network, params: np.ndarray) -> NetField:
    return NetField(net, params)


# ---- ParamSet serialization ----
#
# File format (documented in README): magic "DFVMPRM1", a little-endian uint64
# header length, a JSON header {"config": {...}, "layout": [[name, shape], ...],
# "n_params": N}, then N little-endian float64 values.


def save_params(path, config: NetworkConfig, params: np.ndarray) -> None:
    net = Network(config)
    if params.shape != (net.n_params,):
        raise ValueError(f"ParamSet length {params.shape} does not match config ({net.n_params})")
    header = json.dumps({
        "config": {
            "kind": config.kind, "input_dim": config.input_dim, "width": config.width,
            "depth": config.depth, "activation": config.activation,
            "output_dim": config.output_dim,
        },
        "layout": [[name, list(shape)] for name, shape, _ in net.layout],
        "n_params": net.n_params,
    }).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(params, dtype="<f8").tobytes())


def load_params(path) -> tuple[NetworkConfig, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a ParamSet file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        cfg = NetworkConfig(**header["config"])
        n = header["n_params"]
        data = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(np.float64)
    net = Network(cfg)
    if net.n_params != n or len(data) != n:
        raise ValueError(f"{path}: parameter count mismatch")
    return cfg, data
