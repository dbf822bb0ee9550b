"""Flat key=value run configuration.

One text file drives the whole pipeline; every key mirrors a config field of
the synth / scenario / model / train / baseline modules. CLI --set overrides
beat file values, which beat defaults. Unknown keys are errors, and every
value is parsed to its declared type before any work starts.

Per-module seeds (synth.seed, scenario.seed, model.seed, train.seed) default
to the global `seed` when unset.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError

_UNSET = object()


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{text}'")


def _parse_ratio(text: str) -> tuple[int, int]:
    parts = text.strip().split(":")
    if len(parts) != 2:
        raise ValueError(f"ratio must look like '16:4', got '{text}'")
    n_ids, n_walks = int(parts[0]), int(parts[1])
    if n_ids < 1 or n_walks < 1:
        raise ValueError(f"ratio parts must be positive, got '{text}'")
    return n_ids, n_walks


def _parse_ratios(text: str) -> tuple[tuple[int, int], ...]:
    items = [part for part in text.split(",") if part.strip()]
    if not items:
        raise ValueError("empty ratio list")
    return tuple(_parse_ratio(part) for part in items)


_PARSERS = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": lambda s: s.strip(),
    "ratio": _parse_ratio,
    "ratios": _parse_ratios,
    "optint": lambda s: None if s.strip() == "" else int(s),
    "optfloat": lambda s: None if s.strip() == "" else float(s),
}

# key -> (type, default)
KEYS: dict[str, tuple[str, object]] = {
    "seed": ("int", 0),
    "synth.n_ids": ("int", 100),
    "synth.walks_per_id": ("int", 10),
    "synth.dim": ("int", 128),
    "synth.centroid_scale": ("float", 10.0),
    "synth.sigma_lo": ("float", 0.1),
    "synth.sigma_hi": ("optfloat", None),
    "synth.normalize": ("bool", False),
    "synth.seed": ("optint", None),
    "scenario.train_ids": ("int", 48),
    "scenario.val_ids": ("int", 12),
    "scenario.eval_ids": ("int", 40),
    "scenario.train_ratios": ("ratios", ((24, 2), (12, 4))),
    "scenario.val_ratio": ("ratio", (8, 4)),
    "scenario.eval_ratios": ("ratios", ((16, 4),)),
    "scenario.pos_probes": ("int", 64),
    "scenario.neg_probes": ("int", 64),
    "scenario.val_pos_probes": ("int", 32),
    "scenario.val_neg_probes": ("int", 32),
    "scenario.eval_pos_probes": ("int", 96),
    "scenario.eval_neg_probes": ("int", 96),
    "scenario.seed": ("optint", None),
    "model.d_model": ("int", 128),
    "model.n_layers": ("int", 2),
    "model.n_heads": ("int", 4),
    "model.d_ff": ("int", 256),
    "model.dropout_rate": ("float", 0.1),
    "model.k": ("int", 8),
    "model.scheme": ("str", "per_instance"),
    "model.seed": ("optint", None),
    "train.lr": ("float", 3e-4),
    "train.beta1": ("float", 0.9),
    "train.beta2": ("float", 0.999),
    "train.eps": ("float", 1e-8),
    "train.batch_size": ("int", 64),
    "train.max_epochs": ("int", 30),
    "train.patience": ("int", 5),
    "train.noise_std_rel": ("float", 0.05),
    "train.episodes_per_epoch": ("int", 1),
    "train.pos_weight": ("float", 1.0),
    "train.seed": ("optint", None),
    "baseline.mode": ("str", "min_dist"),
    "baseline.k": ("int", 3),
    "baseline.objective": ("str", "mcc"),
}


class RunConfig:
    """Fully resolved flat configuration."""

    def __init__(self, values: dict[str, object]):
        self._values = values

    def __getitem__(self, key: str):
        if key not in KEYS:
            raise ConfigError(f"unknown config key '{key}'")
        return self._values[key]

    def seed_for(self, module: str) -> int:
        """Module seed, falling back to the global seed."""
        value = self[f"{module}.seed"]
        return int(self["seed"]) if value is None else int(value)

    def to_dict(self) -> dict:
        out = {}
        for key in sorted(KEYS):
            value = self._values[key]
            if isinstance(value, tuple):
                if value and isinstance(value[0], tuple):
                    value = ",".join(f"{a}:{b}" for a, b in value)
                else:
                    value = f"{value[0]}:{value[1]}"
            out[key] = value
        return out


def _assign(values: dict, key: str, raw: str, origin: str) -> None:
    if key not in KEYS:
        raise ConfigError(f"{origin}: unknown config key '{key}'")
    kind, _ = KEYS[key]
    try:
        values[key] = _PARSERS[kind](raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{origin}: bad value for '{key}': {exc}") from exc


def parse_config_file(path: str | Path) -> dict[str, str]:
    """key=value lines; '#' starts a comment; blank lines ignored."""
    raw: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got '{stripped}'")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key in raw:
                raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
            raw[key] = value.strip()
    return raw


def resolve_config(
    config_path: str | Path | None,
    set_overrides: list[str] | None = None,
    seed_override: int | None = None,
) -> RunConfig:
    """Defaults <- config file <- --set overrides <- --seed."""
    values: dict[str, object] = {key: default for key, (_, default) in KEYS.items()}
    if config_path is not None:
        for key, raw in parse_config_file(config_path).items():
            _assign(values, key, raw, str(config_path))
    for item in set_overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        key, _, raw = item.partition("=")
        _assign(values, key.strip(), raw.strip(), "--set")
    if seed_override is not None:
        values["seed"] = int(seed_override)
    return RunConfig(values)
