"""Job configuration: INI sections with typed keys and flag overrides."""
from __future__ import annotations

import configparser
from pathlib import Path

REQUIRED = object()

SCHEMA = {
    "dsp": {
        "sample_rate": (int, 32000),
        "window_size": (int, 1024),
        "hop_size": (int, 320),
        "n_mels": (int, 64),
        "f_min": (float, 50.0),
        "f_max": (float, 14000.0),
        "clip_seconds": (float, 10.0),
    },
    "arch": {
        "name": (str, "cnn14"),
        "width_scale": (float, 1.0),
        "n_classes": (int, 527),
    },
    "train": {
        "batch_size": (int, 32),
        "learning_rate": (float, 0.001),
        "max_iterations": (int, 1000),
        "seed": (int, REQUIRED),
        "balanced": (bool, True),
        "eval_every": (int, 0),
        "target_map": (float, None),
    },
    "augment": {
        "mixup_alpha": (float, 0.0),
        "mixup_domain": (str, "logmel"),
        "specaug": (bool, False),
        "freq_mask_param": (int, 8),
        "n_freq_masks": (int, 2),
        "time_mask_param": (int, 64),
        "n_time_masks": (int, 2),
    },
    "transfer": {
        "strategy": (str, "finetune"),
        "shots": (int, None),
        "head_hidden_dim": (int, 512),
        "output": (str, "sigmoid"),
    },
    "paths": {
        "index": (str, None),
        "eval_index": (str, None),
        "class_map": (str, None),
        "output_dir": (str, "runs/default"),
    },
}


class ConfigError(ValueError):
    pass


def _convert(kind, text, where):
    if text is None or text == "":
        return None
    try:
        if kind is bool:
            low = text.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {kind.__name__}") from None


def load_config(path=None, overrides=(), require_seed=False) -> dict:
    """Resolve a config file plus ``section.key=value`` overrides into a nested dict."""
    raw = {section: {} for section in SCHEMA}
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, value in parser.items(section):
                raw[section][key] = (value, f"{path} [{section}] {key}")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, value = item.split("=", 1)
        section, key = dotted.strip().split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"override {item!r}: unknown section {section!r}")
        raw[section][key.strip()] = (value.strip(), f"override {dotted}")

    resolved = {}
    for section, keys in SCHEMA.items():
        resolved[section] = {}
        for key in raw[section]:
            if key not in keys:
                raise ConfigError(f"unknown key {section}.{key}")
        for key, (kind, default) in keys.items():
            if key in raw[section]:
                text, where = raw[section][key]
                value = _convert(kind, text, where)
            else:
                value = default
            if value is REQUIRED or (value is None and default is REQUIRED):
                if require_seed:
                    raise ConfigError(f"{section}.{key} is required")
                value = None
            resolved[section][key] = value
    return resolved


def write_config(cfg: dict, path):
    parser = configparser.ConfigParser()
    for section, values in cfg.items():
        parser[section] = {k: ("" if v is None else str(v).lower() if isinstance(v, bool) else str(v))
                           for k, v in values.items()}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)
