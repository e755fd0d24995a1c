"""Run configuration: flat key=value settings with typo protection.

Precedence is defaults < SAGA_SEED env (seed only) < config file < command
flags. The fully resolved table is echoed into run metadata so every output
file is self-describing.
"""

import os

from . import costs as cs


class ConfigError(ValueError):
    pass


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected true/false, got {text!r}")


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


# key -> (parser, default)
KNOWN_KEYS = {
    "seed": (int, 0),
    "density": (float, 0.05),
    "v_max": (float, 2.0),
    "r_min": (float, 1.0),
    "r_max": (float, 6.0),
    "replan_interval": (float, 0.1),
    "control_dt": (float, 0.02),
    "goal_tolerance": (float, 1.5),
    "vehicle_radius": (float, 0.3),
    "planning_margin": (float, 0.8),
    "timeout": (float, 120.0),
    "ppe_enabled": (_parse_bool, True),
    "lambda_smooth": (float, 0.01),
    "lambda_safe": (float, 10.0),
    "lambda_goal": (float, 1.0),
    "lambda_acc": (float, 0.01),
    "lambda_traj": (float, 1.0),
    "lambda_score": (float, 0.5),
    "d_safe": (float, 0.8),
    "n_safety_samples": (int, 20),
    "batch_size": (int, 32),
    "epochs": (int, 20),
    "lr": (float, 1e-3),
    "beta1": (float, 0.9),
    "beta2": (float, 0.999),
    "adam_eps": (float, 1e-8),
    "collect_density": (float, 0.10),
    "frames_per_world": (int, 100),
}


def parse_config_file(path):
    """key=value lines, '#' comments. Returns raw string values."""
    raw = {}
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            raw[key.strip()] = value.strip()
    return raw


class RunConfig:
    """Resolved settings; unknown keys are fatal at every layer."""

    def __init__(self, values):
        self.values = values

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def resolve(cls, config_path=None, overrides=None):
        values = {k: d for k, (_, d) in KNOWN_KEYS.items()}
        env_seed = os.environ.get("SAGA_SEED")
        if env_seed is not None:
            try:
                values["seed"] = int(env_seed)
            except ValueError:
                raise ConfigError(f"SAGA_SEED must be an integer, got {env_seed!r}")
        layers = []
        if config_path is not None:
            layers.append(parse_config_file(config_path))
        if overrides:
            layers.append(overrides)
        for layer in layers:
            for key, value in layer.items():
                if key not in KNOWN_KEYS:
                    raise ConfigError(f"unknown config key {key!r}")
                parser = KNOWN_KEYS[key][0]
                if isinstance(value, str):
                    try:
                        value = parser(value)
                    except ConfigError:
                        raise
                    except ValueError:
                        raise ConfigError(f"bad value for {key!r}: {value!r}")
                values[key] = value
        return cls(values)

    def echo_lines(self):
        return [f"{k}={_fmt(self.values[k])}" for k in sorted(self.values)]

    def cost_weights(self):
        return cs.CostWeights(
            lambda_smooth=self["lambda_smooth"],
            lambda_safe=self["lambda_safe"],
            lambda_goal=self["lambda_goal"],
            lambda_acc=self["lambda_acc"],
            lambda_traj=self["lambda_traj"],
            lambda_score=self["lambda_score"],
            d_safe=self["d_safe"],
            n_samples=self["n_safety_samples"],
        )

    def episode_kwargs(self, mode, v_max=None):
        return dict(
            v_max=self["v_max"] if v_max is None else v_max,
            replan_interval=self["replan_interval"],
            control_dt=self["control_dt"],
            goal_tolerance=self["goal_tolerance"],
            vehicle_radius=self["vehicle_radius"],
            planning_margin=self["planning_margin"],
            timeout=self["timeout"],
            ppe_enabled=self["ppe_enabled"],
            selection_mode=mode,
            cost_weights=self.cost_weights(),
            r_min=self["r_min"],
            r_max=self["r_max"],
        )
