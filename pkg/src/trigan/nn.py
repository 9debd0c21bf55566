"""MLP construction, forward evaluation, and Adam optimization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

HIDDEN_ACTIVATIONS = ("relu", "leaky_relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid", "tanh")


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    in_width: int
    hidden: tuple[int, ...]
    out_width: int
    hidden_activation: str = "relu"
    output_activation: str = "identity"
    leaky_slope: float = 0.2

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        widths = (self.in_width, *self.hidden, self.out_width)
        if any(w < 1 for w in widths):
            raise SpecError(f"all widths must be >= 1, got {widths}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise SpecError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise SpecError(f"unknown output activation {self.output_activation!r}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.in_width, *self.hidden, self.out_width)

    @property
    def num_params(self) -> int:
        w = self.widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))


class Mlp:
    """Per-layer weight matrices (fan_in, fan_out) and bias rows (1, fan_out)."""

    def __init__(self, spec: MlpSpec, weights: list[Tensor], biases: list[Tensor]):
        self.spec = spec
        self.weights = weights
        self.biases = biases

    def parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            params.append(b)
        return params

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            named.append((f"W{i}", w))
            named.append((f"b{i}", b))
        return named

    @property
    def num_params(self) -> int:
        return sum(p.data.size for p in self.parameters())


def mlp_init(spec: MlpSpec, seed: int) -> Mlp:
    """Glorot-uniform weights (|w| <= sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    widths = spec.widths
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out))))
        biases.append(Tensor(np.zeros((1, fan_out))))
    return Mlp(spec, weights, biases)


def _activate(x: Tensor, name: str, leaky_slope: float) -> Tensor:
    if name == "identity":
        return x
    if name == "relu":
        return ad.relu(x)
    if name == "leaky_relu":
        return ad.leaky_relu(x, slope=leaky_slope)
    if name == "tanh":
        return ad.tanh(x)
    if name == "sigmoid":
        return ad.sigmoid(x)
    raise SpecError(f"unknown activation {name!r}")


def mlp_forward(net: Mlp, x: Tensor) -> Tensor:
    spec = net.spec
    if x.shape[1] != spec.in_width:
        raise ad.ShapeError(
            f"input width {x.shape[1]} does not match spec in_width {spec.in_width}"
        )
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = ad.add(ad.matmul(h, w), b)
        name = spec.output_activation if i == last else spec.hidden_activation
        h = _activate(h, name, spec.leaky_slope)
    return h


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    _scratch: list[np.ndarray] = field(default_factory=list, repr=False)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "AdamState":
        state = cls(**hyper)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        state._scratch = [np.empty_like(p.data) for p in params]
        return state


def adam_step(state: AdamState, params: Sequence[Tensor], grads: Sequence[np.ndarray]) -> None:
    """Bias-corrected Adam update in place; gradients are left untouched."""
    if len(params) != len(state.m):
        raise ValueError(
            f"optimizer state covers {len(state.m)} parameters, got {len(params)}"
        )
    if not state._scratch:
        state._scratch = [np.empty_like(m) for m in state.m]
    state.t += 1
    step_size = state.lr / (1.0 - state.beta1**state.t)
    inv_sqrt_bc2 = 1.0 / np.sqrt(1.0 - state.beta2**state.t)
    for i, (p, g) in enumerate(zip(params, grads)):
        # A non-finite entry makes the sum non-finite (inf cannot cancel to a
        # finite value), so one reduction suffices as the finiteness check.
        if not np.isfinite(g.sum()):
            raise ad.NumericError(
                f"non-finite gradient for parameter {i} (shape {p.shape})"
            )
        m, v, scratch = state.m[i], state.v[i], state._scratch[i]
        m *= state.beta1
        np.multiply(g, 1.0 - state.beta1, out=scratch)
        m += scratch
        v *= state.beta2
        np.square(g, out=scratch)
        scratch *= 1.0 - state.beta2
        v += scratch
        np.sqrt(v, out=scratch)
        scratch *= inv_sqrt_bc2
        scratch += state.eps
        np.divide(m, scratch, out=scratch)
        scratch *= step_size
        p.data -= scratch


CHECKPOINT_VERSION = 1


def mlp_to_dict(net: Mlp) -> dict:
    spec = net.spec
    return {
        "spec": {
            "in_width": spec.in_width,
            "hidden": list(spec.hidden),
            "out_width": spec.out_width,
            "hidden_activation": spec.hidden_activation,
            "output_activation": spec.output_activation,
            "leaky_slope": spec.leaky_slope,
        },
        "weights": [w.data.tolist() for w in net.weights],
        "biases": [b.data.tolist() for b in net.biases],
    }


def mlp_from_dict(doc: dict) -> Mlp:
    s = doc["spec"]
    spec = MlpSpec(
        in_width=s["in_width"],
        hidden=tuple(s["hidden"]),
        out_width=s["out_width"],
        hidden_activation=s["hidden_activation"],
        output_activation=s["output_activation"],
        leaky_slope=s["leaky_slope"],
    )
    weights = [Tensor(np.array(w, dtype=np.float64)) for w in doc["weights"]]
    biases = [Tensor(np.array(b, dtype=np.float64).reshape(1, -1)) for b in doc["biases"]]
    net = Mlp(spec, weights, biases)
    expected = spec.widths
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (expected[i], expected[i + 1]) or b.shape != (1, expected[i + 1]):
            raise SpecError(
                f"layer {i} arrays {w.shape}/{b.shape} do not match spec widths {expected}"
            )
    return net
