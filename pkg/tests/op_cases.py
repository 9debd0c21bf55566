"""Random gradient-check cases for every registered autodiff operation."""

import numpy as np

import trigan.autodiff as ad
from trigan.autodiff import Tensor


def _rand(rng, rows, cols, positive=False, away_from_zero=False):
    vals = rng.standard_normal((rows, cols))
    if positive:
        vals = np.abs(vals) + 0.5
    if away_from_zero:
        # relu-style kinks break central differences near 0
        vals = np.sign(vals) * (np.abs(vals) + 0.1)
    return Tensor(vals)


def random_op_case(kind, rng):
    """Build (scalar_fn, inputs) exercising one op on random conforming shapes.

    scalar_fn rebuilds the graph from the current input values, so it can be
    handed straight to gradient_check.
    """
    rows = int(rng.integers(2, 5))
    cols = int(rng.integers(2, 5))
    if kind == "matmul":
        inner = int(rng.integers(2, 5))
        a, b = _rand(rng, rows, inner), _rand(rng, inner, cols)
        return (lambda: ad.mean(ad.matmul(a, b))), [a, b]
    if kind == "add":
        a = _rand(rng, rows, cols)
        b = _rand(rng, 1, cols) if rng.random() < 0.5 else _rand(rng, rows, cols)
        return (lambda: ad.mean(ad.add(a, b))), [a, b]
    if kind in ("subtract", "multiply"):
        a, b = _rand(rng, rows, cols), _rand(rng, rows, cols)
        op = ad.subtract if kind == "subtract" else ad.multiply
        return (lambda: ad.mean(op(a, b))), [a, b]
    if kind == "concat":
        a, b = _rand(rng, rows, cols), _rand(rng, rows, int(rng.integers(1, 4)))
        # squaring makes the scalar depend on every concatenated entry
        return (lambda: ad.mean(ad.multiply(ad.concat(a, b), ad.concat(a, b)))), [a, b]
    if kind in ("negate", "tanh", "sigmoid", "log_sigmoid"):
        a = _rand(rng, rows, cols)
        op = getattr(ad, kind)
        return (lambda: ad.mean(op(a))), [a]
    if kind in ("relu", "leaky_relu"):
        a = _rand(rng, rows, cols, away_from_zero=True)
        if kind == "relu":
            return (lambda: ad.mean(ad.relu(a))), [a]
        slope = float(rng.uniform(0.05, 0.5))
        return (lambda: ad.mean(ad.leaky_relu(a, slope=slope))), [a]
    if kind == "log":
        a = _rand(rng, rows, cols, positive=True)
        return (lambda: ad.mean(ad.log(a))), [a]
    if kind == "mean":
        a = _rand(rng, rows, cols)
        return (lambda: ad.mean(a)), [a]
    if kind == "sum":
        a = _rand(rng, rows, cols)
        return (lambda: ad.tensor_sum(a)), [a]
    raise AssertionError(f"no case generator for op kind {kind!r}")


def check_all_ops(cases_per_kind, seed, threshold=1e-4):
    """Gradient-check every registered op kind; returns the worst error seen."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for kind in ad.OP_KINDS:
        for _ in range(cases_per_kind):
            fn, inputs = random_op_case(kind, rng)
            err = ad.gradient_check(fn, inputs)
            assert err < threshold, f"{kind}: gradient error {err}"
            worst = max(worst, err)
    return worst
