"""Dense MLP math on float64 numpy arrays.

Everything trainable in this project (policy, critics, depth-image encoder
and decoder) is a plain fully-connected stack, so this module is the whole
"deep learning framework": batched forward with an activation cache,
reverse-mode backward, a bias-corrected Adam step, Polyak soft updates for
target networks, and a checkpoint format (JSON manifest + little-endian
float64 sidecar, bit-exact on round trip).

Minibatches are row-major: x has shape (batch, in_dim).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("tanh", "relu", "identity")


class DimensionError(ValueError):
    """Array shapes passed to a network operation do not line up."""


class NoForwardCache(RuntimeError):
    """backward() called without a cached forward() for this net."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared where only finite values are allowed."""


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "identity":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def _activate_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    # Derivative w.r.t. the pre-activation z; `a` is the cached activation.
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class MlpNet:
    """Parameter container for one fully-connected network.

    weights[i] has shape (sizes[i], sizes[i+1]); biases[i] has shape
    (sizes[i+1],).  The last layer uses `output_activation`, every other
    layer uses `hidden_activation`.
    """

    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "tanh"
    output_activation: str = "identity"
    _cache: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.sizes) < 2:
            raise DimensionError("need at least an input and an output layer")
        if self.hidden_activation not in ACTIVATIONS or self.output_activation not in ACTIVATIONS:
            raise ValueError("activation must be one of " + ", ".join(ACTIVATIONS))
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.sizes) - 1:
            raise DimensionError("one weight/bias pair per layer transition required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise DimensionError(
                    f"layer {i}: got W{w.shape}, b{b.shape}, expected "
                    f"({self.sizes[i]}, {self.sizes[i + 1]}) and ({self.sizes[i + 1]},)"
                )

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpNet":
        return MlpNet(
            sizes=list(self.sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            hidden_activation=self.hidden_activation,
            output_activation=self.output_activation,
        )

    def activation_of(self, layer: int) -> str:
        return self.output_activation if layer == len(self.weights) - 1 else self.hidden_activation


@dataclass
class MlpGrads:
    """Parameter gradients, shaped exactly like the owning MlpNet."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def scale(self, factor: float) -> "MlpGrads":
        return MlpGrads([w * factor for w in self.weights], [b * factor for b in self.biases])


def make_mlp(
    sizes: list[int],
    rng: np.random.Generator,
    hidden_activation: str = "tanh",
    output_activation: str = "identity",
    final_scale: float = 1.0,
) -> MlpNet:
    """Build a net with fan-in scaled Gaussian weights and zero biases.

    `final_scale` shrinks the last layer's weights (useful for actor nets
    that should start near the zero action).
    """
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        fan_in = sizes[i]
        gain = np.sqrt(2.0 / fan_in) if hidden_activation == "relu" else np.sqrt(1.0 / fan_in)
        w = rng.normal(0.0, gain, size=(sizes[i], sizes[i + 1]))
        if i == len(sizes) - 2:
            w *= final_scale
        weights.append(w)
        biases.append(np.zeros(sizes[i + 1]))
    return MlpNet(list(sizes), weights, biases, hidden_activation, output_activation)


def forward(net: MlpNet, x: np.ndarray) -> np.ndarray:
    """Batched forward pass; caches activations on the net for backward().

    x: (batch, in_dim) float64.  Returns (batch, out_dim).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise DimensionError(f"expected input (batch, {net.in_dim}), got {x.shape}")
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = [x]
    a = x
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        a = _activate(z, net.activation_of(i))
        pre.append(z)
        post.append(a)
    _check_finite(a, "forward output")
    net._cache = {"pre": pre, "post": post}
    return a


def backward(net: MlpNet, grad_output: np.ndarray) -> tuple[MlpGrads, np.ndarray]:
    """Backpropagate dLoss/dOutput through the cached forward pass.

    Returns parameter gradients plus dLoss/dInput, which is what lets an
    actor update chain through a critic.
    """
    if net._cache is None:
        raise NoForwardCache("no cached forward pass; call forward() first")
    pre, post = net._cache["pre"], net._cache["post"]
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != pre[-1].shape:
        raise DimensionError(f"grad_output shape {g.shape} != output shape {pre[-1].shape}")
    grads_w: list[np.ndarray] = [None] * len(net.weights)  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * len(net.biases)  # type: ignore[list-item]
    for i in range(len(net.weights) - 1, -1, -1):
        gz = g * _activate_grad(pre[i], post[i + 1], net.activation_of(i))
        grads_w[i] = post[i].T @ gz
        grads_b[i] = gz.sum(axis=0)
        g = gz @ net.weights[i].T
    return MlpGrads(grads_w, grads_b), g


@dataclass
class AdamState:
    """First/second-moment accumulators mirroring one MlpNet's parameters."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(net: MlpNet, learning_rate: float, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        m_weights=[np.zeros_like(w) for w in net.weights],
        v_weights=[np.zeros_like(w) for w in net.weights],
        m_biases=[np.zeros_like(b) for b in net.biases],
        v_biases=[np.zeros_like(b) for b in net.biases],
        step=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(net: MlpNet, grads: MlpGrads, opt: AdamState) -> MlpNet:
    """One bias-corrected Adam update, in place; returns the net."""
    if len(grads.weights) != len(net.weights):
        raise DimensionError("gradient layout does not match net")
    opt.step += 1
    b1, b2, eps, lr = opt.beta1, opt.beta2, opt.epsilon, opt.learning_rate
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    for i in range(len(net.weights)):
        for param, g, m, v in (
            (net.weights[i], grads.weights[i], opt.m_weights[i], opt.v_weights[i]),
            (net.biases[i], grads.biases[i], opt.m_biases[i], opt.v_biases[i]),
        ):
            if g.shape != param.shape:
                raise DimensionError(f"grad shape {g.shape} != param shape {param.shape}")
            _check_finite(g, "gradient")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return net


def soft_update(target: MlpNet, source: MlpNet, tau: float) -> MlpNet:
    """target <- tau*source + (1-tau)*target, elementwise, in place."""
    if target.sizes != source.sizes:
        raise DimensionError("target/source layer sizes differ")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")
    for tw, sw in zip(target.weights, source.weights):
        tw *= 1.0 - tau
        tw += tau * sw
    for tb, sb in zip(target.biases, source.biases):
        tb *= 1.0 - tau
        tb += tau * sb
    return target


# --------------------------------------------------------------------------
# Checkpoints: <base>.json manifest + <base>.bin little-endian float64 blob.
# Arrays are laid out in manifest declaration order, W0 b0 W1 b1 ... per net,
# then mW0 vW0 mb0 vb0 ... per optimizer. Offsets are in float64 counts.
# --------------------------------------------------------------------------

def _net_arrays(net: MlpNet) -> list[np.ndarray]:
    out = []
    for w, b in zip(net.weights, net.biases):
        out.extend((w, b))
    return out


def _adam_arrays(opt: AdamState) -> list[np.ndarray]:
    out = []
    for i in range(len(opt.m_weights)):
        out.extend((opt.m_weights[i], opt.v_weights[i], opt.m_biases[i], opt.v_biases[i]))
    return out


def save_checkpoint(
    base: str | Path,
    nets: dict[str, MlpNet],
    optimizers: dict[str, AdamState] | None = None,
    scalars: dict | None = None,
) -> None:
    base = Path(base)
    optimizers = optimizers or {}
    blob: list[np.ndarray] = []
    offset = 0
    manifest: dict = {"nets": {}, "optimizers": {}, "scalars": scalars or {}}
    for name, net in nets.items():
        arrays = _net_arrays(net)
        count = sum(a.size for a in arrays)
        manifest["nets"][name] = {
            "sizes": list(net.sizes),
            "hidden_activation": net.hidden_activation,
            "output_activation": net.output_activation,
            "offset": offset,
            "count": count,
        }
        blob.extend(arrays)
        offset += count
    for name, opt in optimizers.items():
        arrays = _adam_arrays(opt)
        count = sum(a.size for a in arrays)
        manifest["optimizers"][name] = {
            "sizes": [opt.m_weights[0].shape[0]] + [w.shape[1] for w in opt.m_weights],
            "step": opt.step,
            "learning_rate": opt.learning_rate,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "epsilon": opt.epsilon,
            "offset": offset,
            "count": count,
        }
        blob.extend(arrays)
        offset += count
    base.parent.mkdir(parents=True, exist_ok=True)
    with open(base.with_suffix(".json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    with open(base.with_suffix(".bin"), "wb") as fh:
        for arr in blob:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(base: str | Path) -> tuple[dict[str, MlpNet], dict[str, AdamState], dict]:
    base = Path(base)
    if not base.with_suffix(".json").exists():
        raise FileNotFoundError(f"checkpoint manifest not found: {base.with_suffix('.json')}")
    with open(base.with_suffix(".json")) as fh:
        manifest = json.load(fh)
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f8")

    def take(offset: int, shape: tuple[int, ...]) -> tuple[np.ndarray, int]:
        n = int(np.prod(shape))
        return raw[offset:offset + n].reshape(shape).astype(np.float64), offset + n

    nets: dict[str, MlpNet] = {}
    for name, meta in manifest["nets"].items():
        sizes = meta["sizes"]
        pos = meta["offset"]
        weights, biases = [], []
        for i in range(len(sizes) - 1):
            w, pos = take(pos, (sizes[i], sizes[i + 1]))
            b, pos = take(pos, (sizes[i + 1],))
            weights.append(w)
            biases.append(b)
        nets[name] = MlpNet(list(sizes), weights, biases,
                            meta["hidden_activation"], meta["output_activation"])
    optimizers: dict[str, AdamState] = {}
    for name, meta in manifest["optimizers"].items():
        sizes = meta["sizes"]
        pos = meta["offset"]
        mw, vw, mb, vb = [], [], [], []
        for i in range(len(sizes) - 1):
            a, pos = take(pos, (sizes[i], sizes[i + 1]))
            b, pos = take(pos, (sizes[i], sizes[i + 1]))
            c, pos = take(pos, (sizes[i + 1],))
            d, pos = take(pos, (sizes[i + 1],))
            mw.append(a)
            vw.append(b)
            mb.append(c)
            vb.append(d)
        optimizers[name] = AdamState(mw, vw, mb, vb, meta["step"], meta["learning_rate"],
                                     meta["beta1"], meta["beta2"], meta["epsilon"])
    return nets, optimizers, manifest.get("scalars", {})
