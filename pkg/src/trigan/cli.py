"""Experiment configuration, orchestration, and artifact emission.

Subcommands: `gen-data` (sample the ground-truth mixture to CSV), `train`
(adversarial training with per-step metrics and periodic evaluation), and
`eval` (sample both generators from a checkpoint and score the match).

Exit codes: 0 success, 2 validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import game
from .autodiff import NumericError
from .data import (
    DatasetFormatError,
    MixtureSpecError,
    default_mixture_spec,
    load_dataset,
    mixture_spec_from_dict,
    mixture_spec_to_dict,
    sample_mixture,
    save_dataset,
    split_semi_supervised,
)
from .evaluate import histogram2d, jsd_multi, mmd2

BASELINES = ("delta-gan", "triple-gan-s")

EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # paths (relative paths resolve against out_dir)
    dataset: str = "dataset.csv"
    out_dir: str = "run"
    seed: int = 0
    # data generation
    n_per_component: int = 5000
    paired_fraction: float | None = None  # None: gen-data uses 1.0, train uses the CSV mask
    mixture: dict | None = None  # custom mixture document; None for the default
    # model
    gen_hidden: list[int] = field(default_factory=lambda: [500, 500, 500, 500])
    disc_hidden: list[int] = field(default_factory=lambda: [128, 128])
    noise_width: int = 2
    # optimizer
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # training
    batch_size: int = 128
    steps: int = 5000
    eval_every: int = 1000
    baseline: str = "delta-gan"
    alpha: float = 0.5
    # evaluation
    n_eval: int = 20000
    mmd_samples: int = 5000
    value_batch: int = 4096
    grid_lo: float = -5.0
    grid_hi: float = 5.0
    grid_resolution: int = 64

    def validate(self) -> None:
        if self.n_per_component < 1:
            raise ConfigError(f"n_per_component must be >= 1, got {self.n_per_component}")
        if self.paired_fraction is not None and not 0.0 <= self.paired_fraction <= 1.0:
            raise ConfigError(
                f"paired_fraction must be in [0, 1], got {self.paired_fraction}"
            )
        if self.baseline not in BASELINES:
            raise ConfigError(f"baseline must be one of {BASELINES}, got {self.baseline!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        for name in ("batch_size", "noise_width", "n_eval", "mmd_samples", "value_batch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if not any(w >= 1 for w in self.gen_hidden) or not any(w >= 1 for w in self.disc_hidden):
            raise ConfigError("gen_hidden and disc_hidden need at least one positive width")
        if self.lr < 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1 or self.adam_eps <= 0:
            raise ConfigError("optimizer hyperparameters out of range")
        if self.grid_resolution < 2 or not self.grid_lo < self.grid_hi:
            raise ConfigError("grid must have resolution >= 2 and grid_lo < grid_hi")
        if self.mixture is not None:
            try:
                mixture_spec_from_dict(self.mixture)
            except (KeyError, TypeError, MixtureSpecError) as exc:
                raise ConfigError(f"mixture: {exc}") from None

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def resolve(self, path_str: str) -> Path:
        path = Path(path_str)
        return path if path.is_absolute() else Path(self.out_dir) / path


def _seed_streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("data", "split", "model", "batch", "eval")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def _model_seed(seed: int) -> int:
    return int(np.random.SeedSequence(seed).spawn(3)[2].generate_state(1)[0])


def _mixture_spec(config: ExperimentConfig):
    if config.mixture is None:
        return default_mixture_spec()
    return mixture_spec_from_dict(config.mixture)


def _write_config_echo(config: ExperimentConfig) -> None:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")


def cmd_gen_data(config: ExperimentConfig) -> Path:
    """Sample the mixture, apply the semi-supervised split, write the CSV and
    a JSON echo of the mixture spec."""
    config.validate()
    _write_config_echo(config)
    spec = _mixture_spec(config)
    streams = _seed_streams(config.seed)
    dataset = sample_mixture(
        spec, config.n_per_component, seed=int(streams["data"].integers(2**31))
    )
    fraction = 1.0 if config.paired_fraction is None else config.paired_fraction
    dataset = split_semi_supervised(
        dataset, fraction, seed=int(streams["split"].integers(2**31))
    )
    csv_path = config.resolve(config.dataset)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, csv_path)
    echo_path = csv_path.with_suffix(".spec.json")
    echo_path.write_text(json.dumps(mixture_spec_to_dict(spec), indent=2) + "\n")
    return csv_path


def _build_model(config: ExperimentConfig):
    kwargs = dict(
        noise_width=config.noise_width,
        gen_hidden=tuple(config.gen_hidden),
        disc_hidden=tuple(config.disc_hidden),
        seed=_model_seed(config.seed),
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        adam_eps=config.adam_eps,
    )
    if config.baseline == "delta-gan":
        return game.build_delta_gan(**kwargs)
    return game.build_triple_gan_s(alpha=config.alpha, **kwargs)


def _metrics_header(baseline: str) -> str:
    if baseline == "delta-gan":
        return "step,loss_d1,loss_d2,loss_g1,loss_g2,value_estimate"
    return "step,loss_d,loss_g1,loss_g2,value_estimate"


def _value_estimate(model, batch) -> float:
    if isinstance(model, game.TriGanModel):
        return game.value_function_estimate(model, batch)
    return game.triple_gan_s_value_estimate(model, batch)


def _run_eval(model, dataset, config: ExperimentConfig, rng, tag: str) -> dict:
    report = evaluation_report(model, dataset, config, rng)
    path = Path(config.out_dir) / f"eval_{tag}.json"
    path.write_text(json.dumps(report, indent=2) + "\n")
    return report


def evaluation_report(model, dataset, config: ExperimentConfig, rng, samples=None) -> dict:
    """Grid-JSD and squared MMD of each generator's joint against the data,
    plus the value-function estimate, with a config echo."""
    if samples is None:
        samples = game.sample_joint_from_generators(model, dataset, config.n_eval, rng)
    px, py = samples
    x_range = (config.grid_lo, config.grid_hi)
    res = config.grid_resolution
    truth = histogram2d(dataset.xy, x_range, x_range, res)
    hist_px = histogram2d(px, x_range, x_range, res)
    hist_py = histogram2d(py, x_range, x_range, res)
    half = (0.5, 0.5)
    n_mmd = min(config.mmd_samples, config.n_eval, len(dataset))
    truth_sub = dataset.xy[rng.choice(len(dataset), size=n_mmd, replace=False)]
    batch = game.assemble_batch(
        dataset, min(config.value_batch, len(dataset)), model.noise_width, rng
    )
    return {
        "grid-jsd-px": jsd_multi([truth, hist_px], half),
        "grid-jsd-py": jsd_multi([truth, hist_py], half),
        "mmd2-px": mmd2(truth_sub, px[:n_mmd]),
        "mmd2-py": mmd2(truth_sub, py[:n_mmd]),
        "value-estimate": _value_estimate(model, batch),
        "config": config.to_dict(),
    }


def cmd_train(config: ExperimentConfig) -> tuple[Path, Path]:
    """Run the configured number of alternating update steps, logging one loss
    row per step, evaluating every eval_every steps, and writing the final
    checkpoint.  Returns (metrics_path, checkpoint_path)."""
    config.validate()
    _write_config_echo(config)
    out = Path(config.out_dir)
    dataset_path = config.resolve(config.dataset)
    if not dataset_path.exists():
        raise ConfigError(f"dataset not found: {dataset_path}")
    dataset = load_dataset(dataset_path)
    streams = _seed_streams(config.seed)
    if config.paired_fraction is not None:
        dataset = split_semi_supervised(
            dataset, config.paired_fraction, seed=int(streams["split"].integers(2**31))
        )
    model = _build_model(config)
    metrics_path = out / "metrics.csv"
    checkpoint_path = out / "checkpoint.npz"
    rng = streams["batch"]
    eval_rng = streams["eval"]
    rows = [_metrics_header(config.baseline)]
    try:
        # The batched matmuls here are small enough that BLAS threading costs
        # more than it saves.
        with threadpool_limits(limits=1):
            for step in range(1, config.steps + 1):
                batch = game.assemble_batch(
                    dataset, config.batch_size, model.noise_width, rng
                )
                if config.baseline == "delta-gan":
                    graph_report, value = _delta_step(model, batch)
                    rows.append(
                        f"{step},{graph_report.loss_d1:.17g},{graph_report.loss_d2:.17g},"
                        f"{graph_report.loss_g1:.17g},{graph_report.loss_g2:.17g},{value:.17g}"
                    )
                else:
                    report, value = _triple_step(model, batch)
                    rows.append(
                        f"{step},{report.loss_d:.17g},{report.loss_g1:.17g},"
                        f"{report.loss_g2:.17g},{value:.17g}"
                    )
                if step % config.eval_every == 0:
                    game.save_checkpoint(model, checkpoint_path)
                    _run_eval(model, dataset, config, eval_rng, tag=f"step_{step}")
    except NumericError as exc:
        metrics_path.write_text("\n".join(rows) + "\n")
        game.save_checkpoint(model, checkpoint_path)
        raise NumericError(
            f"training diverged: {exc}; last-good checkpoint at {checkpoint_path}"
        ) from exc
    metrics_path.write_text("\n".join(rows) + "\n")
    game.save_checkpoint(model, checkpoint_path)
    return metrics_path, checkpoint_path


def _delta_step(model, batch):
    report = game.train_step(model, batch)
    # On a fixed batch the value estimate is exactly -(loss_d1 + loss_d2):
    # the product logs split into the same per-row log terms.
    return report, -(report.loss_d1 + report.loss_d2)


def _triple_step(model, batch):
    report = game.triple_gan_s_train_step(model, batch)
    return report, -report.loss_d


def _save_samples(path: Path, rows: np.ndarray) -> None:
    lines = ["x,y"] + [f"{x:.17g},{y:.17g}" for x, y in rows]
    path.write_text("\n".join(lines) + "\n")


def cmd_eval(checkpoint_path, dataset_path, config: ExperimentConfig) -> Path:
    """Sample both generators from a checkpoint, dump the samples, and write
    the evaluation report JSON.  Returns the report path."""
    config.validate()
    _write_config_echo(config)
    out = Path(config.out_dir)
    model = game.load_checkpoint(checkpoint_path)
    dataset = load_dataset(dataset_path)
    expected_in = 1 + model.noise_width
    if model.gen_x.spec.in_width != expected_in or model.gen_y.spec.in_width != expected_in:
        raise ConfigError(
            f"checkpoint generator input width {model.gen_x.spec.in_width} does not "
            f"match 1 + noise_width = {expected_in}"
        )
    rng = _seed_streams(config.seed)["eval"]
    px, py = game.sample_joint_from_generators(model, dataset, config.n_eval, rng)
    _save_samples(out / "samples_px.csv", px)
    _save_samples(out / "samples_py.csv", py)
    report = evaluation_report(model, dataset, config, rng, samples=(px, py))
    report_path = out / "eval.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    return report_path


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, help="JSON config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=str, help="run output directory")
    parser.add_argument("--paired-fraction", type=float, dest="paired_fraction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trigan",
        description="Joint-distribution matching on a 2D Gaussian-mixture toy task",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen-data", help="sample the ground-truth mixture to CSV")
    _add_common_flags(p_gen)
    p_gen.add_argument("--n-per-component", type=int, dest="n_per_component")

    p_train = sub.add_parser("train", help="train a model on a dataset CSV")
    _add_common_flags(p_train)
    p_train.add_argument("--baseline", choices=BASELINES)
    p_train.add_argument("--alpha", type=float)
    p_train.add_argument("--steps", type=int)
    p_train.add_argument("--dataset", type=str)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint against a dataset")
    _add_common_flags(p_eval)
    p_eval.add_argument("--checkpoint", type=str, required=True)
    p_eval.add_argument("--dataset", type=str)
    p_eval.add_argument("--n-eval", type=int, dest="n_eval")
    return parser


_FLAG_FIELDS = (
    "seed",
    "paired_fraction",
    "n_per_component",
    "baseline",
    "alpha",
    "steps",
    "dataset",
    "n_eval",
)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the config file, then explicit flags."""
    if getattr(args, "config", None):
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig()
    if getattr(args, "out", None):
        config.out_dir = args.out
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if args.command == "gen-data":
            path = cmd_gen_data(config)
            print(f"wrote dataset {path}")
        elif args.command == "train":
            metrics, checkpoint = cmd_train(config)
            print(f"wrote metrics {metrics}")
            print(f"wrote checkpoint {checkpoint}")
        elif args.command == "eval":
            dataset_path = (
                config.resolve(args.dataset) if args.dataset else config.resolve(config.dataset)
            )
            report = cmd_eval(Path(args.checkpoint), dataset_path, config)
            print(f"wrote report {report}")
    except (ConfigError, DatasetFormatError, MixtureSpecError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
