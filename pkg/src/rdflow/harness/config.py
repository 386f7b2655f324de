"""Experiment configuration: defaults, file parsing, and overrides.

Config files are INI-style text with one section per module; every key
must be known, and bad keys fail before any work starts.  CLI flags and
--set overrides take precedence over file values.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

from ..errors import ConfigError
from ..fmtrain import TrainConfig
from ..integrate import IntegratorConfig
from ..synthdata import DatasetSpec
from ..velocity import ModelConfig


def _to_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _to_int_tuple(s: str) -> tuple[int, ...]:
    parts = [p.strip() for p in s.split(",") if p.strip()]
    if not parts:
        raise ConfigError("expected a comma-separated integer list")
    return tuple(int(p) for p in parts)


def _to_opt_float(s: str) -> float | None:
    v = s.strip().lower()
    if v in ("", "none"):
        return None
    return float(s)


# section -> key -> (target dataclass attribute, converter)
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "synthdata": {
        "name": ("name", str.strip),
        "noise_scale": ("noise_scale", _to_opt_float),
        "dim": ("dim", int),
    },
    "velocity": {
        "variant": ("variant", str.strip),
        "adjacency": ("adjacency", str.strip),
        "time_features": ("time_features", int),
        "reaction_hidden": ("reaction_hidden", _to_int_tuple),
        "attention_width": ("attention_width", int),
        "mpnn_hidden": ("mpnn_hidden", _to_int_tuple),
        "mpnn_width": ("mpnn_width", int),
        "gps_width": ("gps_width", int),
        "gps_rounds": ("gps_rounds", int),
        "gps_heads": ("gps_heads", int),
        "walk_length": ("walk_length", int),
        "pe_dim": ("pe_dim", int),
        "knn_k": ("knn_k", int),
        "kappa_hidden": ("kappa_hidden", _to_int_tuple),
        "zero_init_outputs": ("zero_init_outputs", _to_bool),
    },
    "fmtrain": {
        "iterations": ("iterations", int),
        "batch_size": ("batch_size", int),
        "lr": ("lr", float),
        "floor_lr": ("floor_lr", float),
        "weight_decay": ("weight_decay", float),
        "beta1": ("beta1", float),
        "beta2": ("beta2", float),
        "eps": ("eps", float),
        "time_per_sample": ("time_per_sample", _to_bool),
        "noise_at_one": ("noise_at_one", _to_bool),
        "final_window": ("final_window", int),
    },
    "integrate": {
        "method": ("method", str.strip),
        "n_steps": ("n_steps", int),
        "rtol": ("rtol", float),
        "atol": ("atol", float),
        "safety": ("safety", float),
        "min_factor": ("min_factor", float),
        "max_factor": ("max_factor", float),
        "h_init": ("h_init", float),
        "max_steps": ("max_steps", int),
    },
    "metrics": {
        "sliced_projections": ("sliced_projections", int),
        "recall_k": ("recall_k", int),
    },
    "harness": {
        "seeds": ("seeds", _to_int_tuple),
        "out_dir": ("out_dir", str.strip),
        "eval_samples": ("eval_samples", int),
        "sample_batch": ("sample_batch", int),
        "nfe_repeats": ("nfe_repeats", int),
        "plot_trajectories": ("plot_trajectories", _to_bool),
    },
}


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=lambda: DatasetSpec(name="eight-gaussians"))
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    sliced_projections: int = 128
    recall_k: int = 3
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "runs/out"
    eval_samples: int = 2000
    sample_batch: int = 250
    nfe_repeats: int = 10
    plot_trajectories: bool = False

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()
        self.integrator.validate()
        if self.model.dim != self.dataset.dim:
            raise ConfigError(
                f"model dim ({self.model.dim}) must match dataset dim ({self.dataset.dim})"
            )
        if self.eval_samples < 2:
            raise ConfigError("eval_samples must be >= 2")
        if self.sample_batch < 1:
            raise ConfigError("sample_batch must be >= 1")
        if self.nfe_repeats < 1:
            raise ConfigError("nfe_repeats must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")


def _collect(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"unknown config section [{section}]; valid: {', '.join(_SCHEMA)}"
            )
        out[section] = dict(parser.items(section))
    return out


def parse_overrides(pairs) -> dict[str, dict[str, str]]:
    """--set section.key=value strings to a nested dict."""
    out: dict[str, dict[str, str]] = {}
    for pair in pairs:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {pair!r}")
        target, value = pair.split("=", 1)
        section, key = target.split(".", 1)
        out.setdefault(section.strip(), {})[key.strip()] = value
    return out


def _apply(
    values: dict[str, dict[str, str]], base: ExperimentConfig | None = None
) -> ExperimentConfig:
    converted: dict[str, dict[str, object]] = {}
    for section, keys in values.items():
        if section not in _SCHEMA:
            raise ConfigError(
                f"unknown config section [{section}]; valid: {', '.join(_SCHEMA)}"
            )
        schema = _SCHEMA[section]
        converted[section] = {}
        for key, raw in keys.items():
            if key not in schema:
                raise ConfigError(
                    f"unknown key {key!r} in [{section}]; valid: {', '.join(schema)}"
                )
            attr, conv = schema[key]
            try:
                converted[section][attr] = conv(raw)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from exc

    cfg = ExperimentConfig() if base is None else replace(base)
    if "synthdata" in converted:
        cfg.dataset = replace(cfg.dataset, **converted["synthdata"])
    if "velocity" in converted:
        cfg.model = replace(cfg.model, **converted["velocity"])
    if "fmtrain" in converted:
        cfg.train = replace(cfg.train, **converted["fmtrain"])
    if "integrate" in converted:
        cfg.integrator = replace(cfg.integrator, **converted["integrate"])
    for section in ("metrics", "harness"):
        for attr, value in converted.get(section, {}).items():
            setattr(cfg, attr, value)
    # the model operates on whatever the dataset produces
    cfg.model = replace(cfg.model, dim=cfg.dataset.dim)
    cfg.validate()
    return cfg


def load_config(path=None, overrides: dict[str, dict[str, str]] | None = None) -> ExperimentConfig:
    """Read the file (when given), apply overrides on top, validate."""
    values = _collect(path) if path is not None else {}
    for section, keys in (overrides or {}).items():
        values.setdefault(section, {}).update(keys)
    return _apply(values)


def apply_overrides(
    cfg: ExperimentConfig, overrides: dict[str, dict[str, str]]
) -> ExperimentConfig:
    """String overrides (section -> key -> raw value) on top of an existing config."""
    return _apply(overrides or {}, base=cfg)


def config_echo(cfg: ExperimentConfig) -> dict:
    """JSON-friendly snapshot of the effective config (for checkpoints)."""
    return {
        "synthdata": {
            "name": cfg.dataset.name,
            "noise_scale": cfg.dataset.noise_scale,
            "dim": cfg.dataset.dim,
        },
        "velocity": {
            "variant": cfg.model.variant,
            "adjacency": cfg.model.adjacency,
            "time_features": cfg.model.time_features,
            "reaction_hidden": list(cfg.model.reaction_hidden),
            "attention_width": cfg.model.attention_width,
            "mpnn_hidden": list(cfg.model.mpnn_hidden),
            "mpnn_width": cfg.model.mpnn_width,
            "gps_width": cfg.model.gps_width,
            "gps_rounds": cfg.model.gps_rounds,
            "gps_heads": cfg.model.gps_heads,
            "walk_length": cfg.model.walk_length,
            "pe_dim": cfg.model.pe_dim,
            "knn_k": cfg.model.knn_k,
            "kappa_hidden": list(cfg.model.kappa_hidden),
            "zero_init_outputs": cfg.model.zero_init_outputs,
        },
        "fmtrain": {
            "iterations": cfg.train.iterations,
            "batch_size": cfg.train.batch_size,
            "lr": cfg.train.lr,
            "floor_lr": cfg.train.floor_lr,
            "weight_decay": cfg.train.weight_decay,
            "beta1": cfg.train.beta1,
            "beta2": cfg.train.beta2,
            "eps": cfg.train.eps,
            "time_per_sample": cfg.train.time_per_sample,
            "noise_at_one": cfg.train.noise_at_one,
            "final_window": cfg.train.final_window,
        },
        "integrate": {
            "method": cfg.integrator.method,
            "n_steps": cfg.integrator.n_steps,
            "rtol": cfg.integrator.rtol,
            "atol": cfg.integrator.atol,
            "safety": cfg.integrator.safety,
            "min_factor": cfg.integrator.min_factor,
            "max_factor": cfg.integrator.max_factor,
            "h_init": cfg.integrator.h_init,
            "max_steps": cfg.integrator.max_steps,
        },
        "metrics": {
            "sliced_projections": cfg.sliced_projections,
            "recall_k": cfg.recall_k,
        },
        "harness": {
            "seeds": list(cfg.seeds),
            "out_dir": cfg.out_dir,
            "eval_samples": cfg.eval_samples,
            "sample_batch": cfg.sample_batch,
            "nfe_repeats": cfg.nfe_repeats,
            "plot_trajectories": cfg.plot_trajectories,
        },
    }


def config_from_echo(echo: dict) -> ExperimentConfig:
    """Rebuild an ExperimentConfig from a checkpoint's echo dict."""
    cfg = ExperimentConfig()
    sd = echo.get("synthdata", {})
    cfg.dataset = DatasetSpec(
        name=sd.get("name", cfg.dataset.name),
        noise_scale=sd.get("noise_scale"),
        dim=int(sd.get("dim", 2)),
    )
    ve = dict(echo.get("velocity", {}))
    for key in ("reaction_hidden", "mpnn_hidden", "kappa_hidden"):
        if key in ve:
            ve[key] = tuple(ve[key])
    cfg.model = replace(cfg.model, dim=cfg.dataset.dim, **ve)
    cfg.train = replace(cfg.train, **echo.get("fmtrain", {}))
    cfg.integrator = replace(cfg.integrator, **echo.get("integrate", {}))
    for key, value in echo.get("metrics", {}).items():
        setattr(cfg, key, value)
    hs = dict(echo.get("harness", {}))
    if "seeds" in hs:
        hs["seeds"] = tuple(hs["seeds"])
    for key, value in hs.items():
        setattr(cfg, key, value)
    cfg.validate()
    return cfg
