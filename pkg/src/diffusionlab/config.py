"""Experiment configuration: a flat, sectioned, plain-text key-value format.

Example::

    [task]
    kind = serial
    m = 64
    length = 16

    [decode]
    total_steps = 16
    temperature = 0.0

Unknown sections or keys are errors, not warnings, and every key has an
explicit type.  The CLI exposes one flag per key.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .decoding import DecodeConfig, EarlyStop
from .tasks import TaskSpec


class ConfigError(ValueError):
    """Raised when a configuration fails to parse or validate."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_int_list(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    return [int(part) for part in text.split(",")]


def _parse_float_list(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    return [float(part) for part in text.split(",")]


def _parse_str_list(text: str) -> list[str]:
    text = text.strip()
    if not text:
        return []
    return [part.strip() for part in text.split(",")]


# section -> key -> (parser, default). Defaults of None mean "required when
# the owning command uses the section".
CONFIG_SCHEMA = {
    "task": {
        "kind": (str, "serial"),
        "m": (int, 64),
        "a": (int, 3),
        "b": (int, 1),
        "w": (int, 8),
        "eta": (float, 0.05),
        "length": (int, 16),
        "answer_positions": (_parse_int_list, []),
    },
    "decode": {
        "total_steps": (int, 16),
        "block_length": (int, 32),
        "temperature": (float, 0.0),
        "strategy": (str, "low_confidence"),
        "revision_budget": (int, 0),
        "early_stop": (_parse_bool, False),
        "early_stop_threshold": (float, 0.99),
        "patience": (int, 3),
        "seed": (int, 0),
        "max_length": (int, 512),
        "prompt": (str, ""),
    },
    "sweep": {
        "axis": (str, "diffusion"),
        "grid": (_parse_int_list, [1, 2, 4, 8, 16]),
        "runs": (int, 100),
        "prompts": (int, 4),
        "samples": (int, 64),
        "temperatures": (_parse_float_list, [0.1, 0.5, 1.0]),
        "k_max": (int, 32),
        "observe": (str, "prefix:1"),
        "target_step": (int, -1),
        "over_diffusion_margin": (float, 0.02),
        "plateau_delta": (float, 0.02),
        "epsilon": (int, 1),
        "pair": (_parse_str_list, ["serial", "parallel"]),
        "perturb": (float, 0.0),
    },
    "output": {
        "directory": (str, ""),
        "formats": (_parse_str_list, ["json", "csv"]),
        "plots": (_parse_bool, True),
    },
    "run": {
        "master_seed": (int, 0),
        "workers": (int, 1),
    },
}

OUTPUT_DIR_ENV = "DIFFUSIONLAB_OUTPUT_DIR"


@dataclass
class ExperimentConfig:
    """Typed view of a parsed configuration with spec validation hooks."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def task_spec(self, kind: str | None = None) -> TaskSpec:
        task = self.values["task"]
        return TaskSpec(
            kind=kind if kind is not None else task["kind"],
            m=task["m"],
            length=task["length"],
            a=task["a"],
            b=task["b"],
            w=task["w"],
            eta=task["eta"],
            answer_positions=tuple(task["answer_positions"]),
        )

    def decode_config(self) -> DecodeConfig:
        decode = self.values["decode"]
        return DecodeConfig(
            total_steps=decode["total_steps"],
            block_length=decode["block_length"],
            temperature=decode["temperature"],
            strategy=decode["strategy"],
            revision_budget=decode["revision_budget"],
            early_stop=EarlyStop(
                enabled=decode["early_stop"],
                threshold=decode["early_stop_threshold"],
                patience=decode["patience"],
            ),
            seed=decode["seed"],
            max_length=decode["max_length"],
        )

    def canonical_text(self) -> str:
        """Deterministic rendering of every resolved value, for hashing.

        The output directory is excluded: it decides where artifacts land,
        never what they contain.
        """
        lines = []
        for section in sorted(self.values):
            lines.append(f"[{section}]")
            for key in sorted(self.values[section]):
                if section == "output" and key == "directory":
                    continue
                value = self.values[section][key]
                if isinstance(value, list):
                    rendered = ",".join(str(v) for v in value)
                else:
                    rendered = repr(value) if isinstance(value, float) else str(value)
                lines.append(f"{key} = {rendered}")
        return "\n".join(lines) + "\n"


def default_config() -> ExperimentConfig:
    values = {
        section: {key: _copy_default(default) for key, (_, default) in keys.items()}
        for section, keys in CONFIG_SCHEMA.items()
    }
    return ExperimentConfig(values=values)


def _copy_default(default):
    return list(default) if isinstance(default, list) else default


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    config = default_config()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in CONFIG_SCHEMA:
                raise ConfigError(f"{source}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        if section is None:
            raise ConfigError(f"{source}:{lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_SCHEMA[section]:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} in [{section}]")
        parser, _ = CONFIG_SCHEMA[section][key]
        try:
            config.values[section][key] = parser(value.strip())
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {section}.{key}: {exc}") from exc
    return config


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def apply_override(config: ExperimentConfig, section: str, key: str, raw_value: str) -> None:
    if section not in CONFIG_SCHEMA or key not in CONFIG_SCHEMA[section]:
        raise ConfigError(f"unknown config key {section}.{key}")
    parser, _ = CONFIG_SCHEMA[section][key]
    try:
        config.values[section][key] = parser(raw_value)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {section}.{key}: {exc}") from exc
