"""The three-player adversarial game for joint-distribution matching.

Two conditional generators produce fake (x, y) pairs from the marginals plus
Gaussian noise; discriminator one separates real pairs from fakes, and
discriminator two separates the two fake kinds.  Generator updates use the
non-saturating losses (minimize -log D on own fakes).  A single-discriminator
weighted baseline ("triple-gan-s") is included for comparison.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import PairDataset
from .nn import AdamState, Mlp, MlpSpec, adam_step, mlp_from_dict, mlp_init, mlp_to_dict

CHECKPOINT_VERSION = 1


@dataclass
class TriGanModel:
    gen_x: Mlp  # (y ++ z) -> x
    gen_y: Mlp  # (x ++ z) -> y
    disc1: Mlp  # (x ++ y) -> prob real pair
    disc2: Mlp  # (x ++ y) -> prob fake came from gen_x
    noise_width: int
    opt_g: AdamState
    opt_d: AdamState

    @property
    def theta_g(self) -> list[Tensor]:
        return self.gen_x.parameters() + self.gen_y.parameters()

    @property
    def theta_d(self) -> list[Tensor]:
        return self.disc1.parameters() + self.disc2.parameters()


@dataclass
class Batch:
    """M paired rows, M draws from each marginal, and the per-generator noise."""

    paired_x: np.ndarray
    paired_y: np.ndarray
    unpaired_x: np.ndarray
    unpaired_y: np.ndarray
    z_x: np.ndarray  # noise rows fed to gen_x
    z_y: np.ndarray  # noise rows fed to gen_y

    def __post_init__(self) -> None:
        m = self.paired_x.shape[0]
        blocks = (self.paired_y, self.unpaired_x, self.unpaired_y, self.z_x, self.z_y)
        if any(b.shape[0] != m for b in blocks):
            raise ValueError("all batch blocks must have the same row count")

    @property
    def size(self) -> int:
        return self.paired_x.shape[0]


@dataclass
class LossReport:
    loss_d1: float | None = None
    loss_d2: float | None = None
    loss_g1: float | None = None
    loss_g2: float | None = None
    rho11: float | None = None
    rho12: float | None = None
    rho13: float | None = None
    rho21: float | None = None
    rho22: float | None = None


def _child_seeds(seed: int, n: int) -> list[int]:
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(n)]


def build_delta_gan(
    x_width: int = 1,
    y_width: int = 1,
    noise_width: int = 2,
    gen_hidden: tuple[int, ...] = (500, 500, 500, 500),
    disc_hidden: tuple[int, ...] = (128, 128),
    seed: int = 0,
    lr: float = 2e-4,
    beta1: float = 0.5,
    beta2: float = 0.999,
    adam_eps: float = 1e-8,
) -> TriGanModel:
    s_gx, s_gy, s_d1, s_d2 = _child_seeds(seed, 4)
    gen_x = mlp_init(MlpSpec(y_width + noise_width, tuple(gen_hidden), x_width), s_gx)
    gen_y = mlp_init(MlpSpec(x_width + noise_width, tuple(gen_hidden), y_width), s_gy)
    disc_spec = MlpSpec(
        x_width + y_width, tuple(disc_hidden), 1, output_activation="sigmoid"
    )
    disc1 = mlp_init(disc_spec, s_d1)
    disc2 = mlp_init(disc_spec, s_d2)
    hyper = dict(lr=lr, beta1=beta1, beta2=beta2, eps=adam_eps)
    model = TriGanModel(gen_x, gen_y, disc1, disc2, noise_width, AdamState(**hyper), AdamState(**hyper))
    model.opt_g = AdamState.for_params(model.theta_g, **hyper)
    model.opt_d = AdamState.for_params(model.theta_d, **hyper)
    return model


def assemble_batch(dataset: PairDataset, m: int, noise_width: int, rng) -> Batch:
    """Draw the paired block from the paired subset and the unpaired blocks
    (with replacement) from the full marginals, plus fresh noise."""
    if m < 1:
        raise ValueError(f"batch size must be >= 1, got {m}")
    if dataset.num_paired == 0:
        raise ValueError(
            "dataset has no paired rows; the real-pair loss term is undefined "
            "(use a paired fraction > 0)"
        )
    paired_pool = dataset.paired_rows()
    paired = paired_pool[rng.integers(0, paired_pool.shape[0], size=m)]
    ux = dataset.x_marginal()[rng.integers(0, len(dataset), size=m)]
    uy = dataset.y_marginal()[rng.integers(0, len(dataset), size=m)]
    return Batch(
        paired_x=paired[:, 0:1],
        paired_y=paired[:, 1:2],
        unpaired_x=ux,
        unpaired_y=uy,
        z_x=rng.standard_normal((m, noise_width)),
        z_y=rng.standard_normal((m, noise_width)),
    )


def _fake_pair_tensors(
    gen_x: Mlp, gen_y: Mlp, batch: Batch
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """(x_tilde, y_in, x_in, y_tilde) on the active tape; gradients flow into
    the generators through the reparameterized noise inputs."""
    from .nn import mlp_forward

    y_in = Tensor(batch.unpaired_y)
    x_in = Tensor(batch.unpaired_x)
    x_tilde = mlp_forward(gen_x, ad.concat(y_in, Tensor(batch.z_x)))
    y_tilde = mlp_forward(gen_y, ad.concat(x_in, Tensor(batch.z_y)))
    return x_tilde, y_in, x_in, y_tilde


def sample_fake_pairs(model, unpaired_x: np.ndarray, unpaired_y: np.ndarray, rng):
    """Fake pairs ((x_tilde, y), (x, y_tilde)) with fresh independent noise per
    row and per generator; outputs stay attached to the active tape."""
    unpaired_x = np.asarray(unpaired_x, dtype=np.float64)
    unpaired_y = np.asarray(unpaired_y, dtype=np.float64)
    if unpaired_x.shape[0] != unpaired_y.shape[0]:
        raise ValueError("unpaired blocks must have equal row counts")
    m = unpaired_x.shape[0]
    batch = Batch(
        paired_x=unpaired_x,  # placeholders; only the unpaired blocks are used
        paired_y=unpaired_y,
        unpaired_x=unpaired_x,
        unpaired_y=unpaired_y,
        z_x=rng.standard_normal((m, model.noise_width)),
        z_y=rng.standard_normal((m, model.noise_width)),
    )
    x_tilde, y_in, x_in, y_tilde = _fake_pair_tensors(model.gen_x, model.gen_y, batch)
    return (x_tilde, y_in), (x_in, y_tilde)


def _disc_prob(disc: Mlp, x: Tensor, y: Tensor) -> Tensor:
    from .nn import mlp_forward

    return mlp_forward(disc, ad.concat(x, y))


def _neg_mean_log(p: Tensor) -> Tensor:
    return ad.negate(ad.mean(ad.log(p)))


def _neg_mean_log1m(p: Tensor) -> Tensor:
    ones = Tensor(np.ones(p.shape))
    return ad.negate(ad.mean(ad.log(ad.subtract(ones, p))))


def _require_finite(**values: float) -> None:
    for name, value in values.items():
        if not np.isfinite(value):
            raise ad.NumericError(f"{name} is not finite: {value}")


class _GameGraph:
    """Loss tensors for one batch, built on the active tape.

    Discriminator losses see the fakes as constants; generator losses keep the
    fakes attached so gradients reach the generators through the
    discriminators.
    """

    def __init__(self, model: TriGanModel, batch: Batch) -> None:
        x_tilde, y_in, x_in, y_tilde = _fake_pair_tensors(model.gen_x, model.gen_y, batch)
        x_tilde_const, y_tilde_const = x_tilde.detach(), y_tilde.detach()

        rho11 = _disc_prob(model.disc1, Tensor(batch.paired_x), Tensor(batch.paired_y))
        rho12_c = _disc_prob(model.disc1, x_tilde_const, y_in)
        rho13_c = _disc_prob(model.disc1, x_in, y_tilde_const)
        rho21_c = _disc_prob(model.disc2, x_tilde_const, y_in)
        rho22_c = _disc_prob(model.disc2, x_in, y_tilde_const)

        self.loss_d1 = ad.add(
            _neg_mean_log(rho11),
            ad.add(_neg_mean_log1m(rho12_c), _neg_mean_log1m(rho13_c)),
        )
        self.loss_d2 = ad.add(_neg_mean_log(rho21_c), _neg_mean_log1m(rho22_c))
        self.loss_d = ad.add(self.loss_d1, self.loss_d2)

        rho12 = _disc_prob(model.disc1, x_tilde, y_in)
        rho13 = _disc_prob(model.disc1, x_in, y_tilde)
        rho21 = _disc_prob(model.disc2, x_tilde, y_in)
        rho22 = _disc_prob(model.disc2, x_in, y_tilde)

        self.loss_g1 = ad.add(_neg_mean_log(rho12), _neg_mean_log1m(rho21))
        self.loss_g2 = ad.add(_neg_mean_log(rho13), _neg_mean_log(rho22))
        self.loss_g = ad.add(self.loss_g1, self.loss_g2)

        self.rho_means = {
            "rho11": float(rho11.data.mean()),
            "rho12": float(rho12.data.mean()),
            "rho13": float(rho13.data.mean()),
            "rho21": float(rho21.data.mean()),
            "rho22": float(rho22.data.mean()),
        }

    def report(self) -> LossReport:
        report = LossReport(
            loss_d1=self.loss_d1.item(),
            loss_d2=self.loss_d2.item(),
            loss_g1=self.loss_g1.item(),
            loss_g2=self.loss_g2.item(),
            **self.rho_means,
        )
        _require_finite(
            loss_d1=report.loss_d1,
            loss_d2=report.loss_d2,
            loss_g1=report.loss_g1,
            loss_g2=report.loss_g2,
        )
        return report


def discriminator_losses(model: TriGanModel, batch: Batch) -> LossReport:
    with ad.Tape():
        graph = _GameGraph(model, batch)
        full = graph.report()
    return LossReport(
        loss_d1=full.loss_d1,
        loss_d2=full.loss_d2,
        rho11=full.rho11,
        rho12=full.rho12,
        rho13=full.rho13,
        rho21=full.rho21,
        rho22=full.rho22,
    )


def generator_losses(model: TriGanModel, batch: Batch) -> LossReport:
    with ad.Tape():
        graph = _GameGraph(model, batch)
        full = graph.report()
    return LossReport(
        loss_g1=full.loss_g1,
        loss_g2=full.loss_g2,
        rho11=full.rho11,
        rho12=full.rho12,
        rho13=full.rho13,
        rho21=full.rho21,
        rho22=full.rho22,
    )


def train_step(model: TriGanModel, batch: Batch) -> LossReport:
    """One discriminator update on (loss_d1 + loss_d2) with fakes detached,
    then one generator update on (loss_g1 + loss_g2) with the discriminators
    frozen.  Returns losses measured at the pre-update parameters."""
    theta_d, theta_g = model.theta_d, model.theta_g
    everything = theta_d + theta_g
    with ad.Tape():
        graph = _GameGraph(model, batch)
        report = graph.report()
        ad.zero_grads(everything)
        ad.backward(graph.loss_d)
        adam_step(model.opt_d, theta_d, [p.grad for p in theta_d])
        ad.zero_grads(everything)
        ad.backward(graph.loss_g)
        adam_step(model.opt_g, theta_g, [p.grad for p in theta_g])
        ad.zero_grads(everything)
    return report


def value_function_estimate(model, batch: Batch) -> float:
    """Monte-Carlo estimate of the game's value function on this batch.

    V = E log D1(real) + E log((1-D1) D2)(fake from gen_x)
      + E log((1-D1)(1-D2))(fake from gen_y); diagnostic only.
    """
    with ad.Tape():
        x_tilde, y_in, x_in, y_tilde = _fake_pair_tensors(model.gen_x, model.gen_y, batch)
        rho11 = _disc_prob(model.disc1, Tensor(batch.paired_x), Tensor(batch.paired_y)).data
        rho12 = _disc_prob(model.disc1, x_tilde, y_in).data
        rho13 = _disc_prob(model.disc1, x_in, y_tilde).data
        rho21 = _disc_prob(model.disc2, x_tilde, y_in).data
        rho22 = _disc_prob(model.disc2, x_in, y_tilde).data
    return float(
        np.log(rho11).mean()
        + np.log((1.0 - rho12) * rho21).mean()
        + np.log((1.0 - rho13) * (1.0 - rho22)).mean()
    )


# --- single-discriminator weighted baseline ("triple-gan-s") ---


@dataclass
class TripleGanSConfig:
    alpha: float
    disc: Mlp  # (x ++ y) -> prob real pair

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


@dataclass
class TripleGanSReport:
    loss_d: float | None = None
    loss_g1: float | None = None
    loss_g2: float | None = None
    rho_real: float | None = None
    rho_fake_x: float | None = None
    rho_fake_y: float | None = None


@dataclass
class TripleGanSModel:
    gen_x: Mlp
    gen_y: Mlp
    config: TripleGanSConfig
    noise_width: int
    opt_g: AdamState
    opt_d: AdamState

    @property
    def theta_g(self) -> list[Tensor]:
        return self.gen_x.parameters() + self.gen_y.parameters()

    @property
    def theta_d(self) -> list[Tensor]:
        return self.config.disc.parameters()


def build_triple_gan_s(
    alpha: float = 0.5,
    x_width: int = 1,
    y_width: int = 1,
    noise_width: int = 2,
    gen_hidden: tuple[int, ...] = (500, 500, 500, 500),
    disc_hidden: tuple[int, ...] = (128, 128),
    seed: int = 0,
    lr: float = 2e-4,
    beta1: float = 0.5,
    beta2: float = 0.999,
    adam_eps: float = 1e-8,
) -> TripleGanSModel:
    s_gx, s_gy, s_d = _child_seeds(seed, 3)
    gen_x = mlp_init(MlpSpec(y_width + noise_width, tuple(gen_hidden), x_width), s_gx)
    gen_y = mlp_init(MlpSpec(x_width + noise_width, tuple(gen_hidden), y_width), s_gy)
    disc = mlp_init(
        MlpSpec(x_width + y_width, tuple(disc_hidden), 1, output_activation="sigmoid"),
        s_d,
    )
    config = TripleGanSConfig(alpha=alpha, disc=disc)
    hyper = dict(lr=lr, beta1=beta1, beta2=beta2, eps=adam_eps)
    model = TripleGanSModel(gen_x, gen_y, config, noise_width, AdamState(**hyper), AdamState(**hyper))
    model.opt_g = AdamState.for_params(model.theta_g, **hyper)
    model.opt_d = AdamState.for_params(model.theta_d, **hyper)
    return model


class _TripleGanSGraph:
    def __init__(self, config: TripleGanSConfig, gen_x: Mlp, gen_y: Mlp, batch: Batch):
        alpha = config.alpha
        x_tilde, y_in, x_in, y_tilde = _fake_pair_tensors(gen_x, gen_y, batch)
        x_tilde_const, y_tilde_const = x_tilde.detach(), y_tilde.detach()

        rho_real = _disc_prob(config.disc, Tensor(batch.paired_x), Tensor(batch.paired_y))
        rho_fx_c = _disc_prob(config.disc, x_tilde_const, y_in)
        rho_fy_c = _disc_prob(config.disc, x_in, y_tilde_const)

        def scale(t: Tensor, c: float) -> Tensor:
            return ad.multiply(t, Tensor([[c]]))

        # loss_d = -V with V = E log D(real) + (1-a) E log(1-D(fake_x))
        #                      + a E log(1-D(fake_y))
        self.loss_d = ad.add(
            _neg_mean_log(rho_real),
            ad.add(
                scale(_neg_mean_log1m(rho_fx_c), 1.0 - alpha),
                scale(_neg_mean_log1m(rho_fy_c), alpha),
            ),
        )

        rho_fx = _disc_prob(config.disc, x_tilde, y_in)
        rho_fy = _disc_prob(config.disc, x_in, y_tilde)
        self.loss_g1 = scale(_neg_mean_log(rho_fx), 1.0 - alpha)
        self.loss_g2 = scale(_neg_mean_log(rho_fy), alpha)
        self.loss_g = ad.add(self.loss_g1, self.loss_g2)

        self.rho_means = {
            "rho_real": float(rho_real.data.mean()),
            "rho_fake_x": float(rho_fx.data.mean()),
            "rho_fake_y": float(rho_fy.data.mean()),
        }

    def report(self) -> TripleGanSReport:
        report = TripleGanSReport(
            loss_d=self.loss_d.item(),
            loss_g1=self.loss_g1.item(),
            loss_g2=self.loss_g2.item(),
            **self.rho_means,
        )
        _require_finite(loss_d=report.loss_d, loss_g1=report.loss_g1, loss_g2=report.loss_g2)
        return report


def triple_gan_s_losses(
    config: TripleGanSConfig, gen_x: Mlp, gen_y: Mlp, batch: Batch
) -> TripleGanSReport:
    """Discriminator loss is the negated weighted value function (fakes
    detached); generator losses are the non-saturating -log D on own fakes,
    weighted by (1 - alpha) and alpha."""
    with ad.Tape():
        return _TripleGanSGraph(config, gen_x, gen_y, batch).report()


def triple_gan_s_train_step(model: TripleGanSModel, batch: Batch) -> TripleGanSReport:
    theta_d, theta_g = model.theta_d, model.theta_g
    everything = theta_d + theta_g
    with ad.Tape():
        graph = _TripleGanSGraph(model.config, model.gen_x, model.gen_y, batch)
        report = graph.report()
        ad.zero_grads(everything)
        ad.backward(graph.loss_d)
        adam_step(model.opt_d, theta_d, [p.grad for p in theta_d])
        ad.zero_grads(everything)
        ad.backward(graph.loss_g)
        adam_step(model.opt_g, theta_g, [p.grad for p in theta_g])
        ad.zero_grads(everything)
    return report


def triple_gan_s_value_estimate(model: TripleGanSModel, batch: Batch) -> float:
    alpha = model.config.alpha
    with ad.Tape():
        x_tilde, y_in, x_in, y_tilde = _fake_pair_tensors(model.gen_x, model.gen_y, batch)
        rho_real = _disc_prob(
            model.config.disc, Tensor(batch.paired_x), Tensor(batch.paired_y)
        ).data
        rho_fx = _disc_prob(model.config.disc, x_tilde, y_in).data
        rho_fy = _disc_prob(model.config.disc, x_in, y_tilde).data
    return float(
        np.log(rho_real).mean()
        + (1.0 - alpha) * np.log(1.0 - rho_fx).mean()
        + alpha * np.log(1.0 - rho_fy).mean()
    )


def sample_joint_from_generators(
    model, dataset: PairDataset, n: int, rng, block: int = 2048
) -> tuple[np.ndarray, np.ndarray]:
    """Draw n joint samples from each generator: (gen_x(y, z), y) with y from
    the dataset's y-marginal and (x, gen_y(x, z)) with x from the x-marginal.
    Returns (samples_px, samples_py), each (n, 2)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    xs = dataset.x_marginal()[rng.integers(0, len(dataset), size=n)]
    ys = dataset.y_marginal()[rng.integers(0, len(dataset), size=n)]
    z_x = rng.standard_normal((n, model.noise_width))
    z_y = rng.standard_normal((n, model.noise_width))
    from .nn import mlp_forward

    px_rows, py_rows = [], []
    for start in range(0, n, block):
        sl = slice(start, min(start + block, n))
        with ad.Tape():
            x_tilde = mlp_forward(model.gen_x, ad.concat(Tensor(ys[sl]), Tensor(z_x[sl])))
            y_tilde = mlp_forward(model.gen_y, ad.concat(Tensor(xs[sl]), Tensor(z_y[sl])))
            px_rows.append(np.column_stack([x_tilde.data[:, 0], ys[sl][:, 0]]))
            py_rows.append(np.column_stack([xs[sl][:, 0], y_tilde.data[:, 0]]))
    return np.concatenate(px_rows, axis=0), np.concatenate(py_rows, axis=0)


# --- checkpoints ---


def save_checkpoint(model, path) -> None:
    """Write spec metadata plus exact float64 parameter arrays (.npz)."""
    arrays: dict[str, np.ndarray] = {}
    if isinstance(model, TriGanModel):
        meta = {
            "format_version": CHECKPOINT_VERSION,
            "kind": "delta-gan",
            "noise_width": model.noise_width,
            "networks": {},
        }
        nets = {"gen_x": model.gen_x, "gen_y": model.gen_y, "disc1": model.disc1, "disc2": model.disc2}
    elif isinstance(model, TripleGanSModel):
        meta = {
            "format_version": CHECKPOINT_VERSION,
            "kind": "triple-gan-s",
            "noise_width": model.noise_width,
            "alpha": model.config.alpha,
            "networks": {},
        }
        nets = {"gen_x": model.gen_x, "gen_y": model.gen_y, "disc": model.config.disc}
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    for name, net in nets.items():
        doc = mlp_to_dict(net)
        meta["networks"][name] = doc["spec"]
        for pname, tensor in net.named_parameters():
            arrays[f"{name}/{pname}"] = tensor.data
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def _mlp_from_checkpoint(meta_spec: dict, arrays, prefix: str) -> Mlp:
    n_layers = len(meta_spec["hidden"]) + 1
    doc = {
        "spec": meta_spec,
        "weights": [arrays[f"{prefix}/W{i}"].tolist() for i in range(n_layers)],
        "biases": [arrays[f"{prefix}/b{i}"].tolist() for i in range(n_layers)],
    }
    return mlp_from_dict(doc)


def load_checkpoint(path):
    """Load a checkpoint written by save_checkpoint; optimizer state is fresh."""
    with np.load(path, allow_pickle=False) as arrays:
        meta = json.loads(str(arrays["meta"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {meta.get('format_version')!r}"
            )
        kind = meta["kind"]
        if kind == "delta-gan":
            model = TriGanModel(
                gen_x=_mlp_from_checkpoint(meta["networks"]["gen_x"], arrays, "gen_x"),
                gen_y=_mlp_from_checkpoint(meta["networks"]["gen_y"], arrays, "gen_y"),
                disc1=_mlp_from_checkpoint(meta["networks"]["disc1"], arrays, "disc1"),
                disc2=_mlp_from_checkpoint(meta["networks"]["disc2"], arrays, "disc2"),
                noise_width=int(meta["noise_width"]),
                opt_g=AdamState(),
                opt_d=AdamState(),
            )
            model.opt_g = AdamState.for_params(model.theta_g)
            model.opt_d = AdamState.for_params(model.theta_d)
            return model
        if kind == "triple-gan-s":
            config = TripleGanSConfig(
                alpha=float(meta["alpha"]),
                disc=_mlp_from_checkpoint(meta["networks"]["disc"], arrays, "disc"),
            )
            model = TripleGanSModel(
                gen_x=_mlp_from_checkpoint(meta["networks"]["gen_x"], arrays, "gen_x"),
                gen_y=_mlp_from_checkpoint(meta["networks"]["gen_y"], arrays, "gen_y"),
                config=config,
                noise_width=int(meta["noise_width"]),
                opt_g=AdamState(),
                opt_d=AdamState(),
            )
            model.opt_g = AdamState.for_params(model.theta_g)
            model.opt_d = AdamState.for_params(model.theta_d)
            return model
        raise ValueError(f"unknown checkpoint kind {kind!r}")
