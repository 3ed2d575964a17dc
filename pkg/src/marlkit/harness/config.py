"""Run configuration: a YAML document validated into a :class:`RunConfig`.

Every section accepts only the keys listed in the schema below; unknown,
missing or out-of-range entries raise :class:`ConfigError` naming the
dotted key path (for example ``algorithm.hyperparams.gamma``).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import yaml

from ..errors import ConfigError
from ..nn import Hyperparams

ENVIRONMENTS = ("room_clear", "take_cover")
ALGORITHMS = ("dqn", "ddpg", "maddpg", "ppo", "dagger")
SINGLE_AGENT = ("dqn", "ddpg", "ppo", "dagger")

# section -> {key: default}; a default of REQUIRED marks a mandatory key
REQUIRED = object()

ENV_KEYS = {
    "room_clear": {
        "layout": "default", "n_red": 2, "n_blue": 3, "hp_max": 3, "attack_damage": 1,
        "attack_range": 6, "kill_reward": 1.0, "survivor_bonus": 0.5, "step_cap": 200,
        "view_size": 7, "opponent": "scripted",
    },
    "take_cover": {
        "n_layouts": 3, "layout_seed": 0, "step_cap": 500, "step_size": 0.25, "turn_degrees": 30,
        "n_rays": 24, "spawn_jitter": 2, "cover_reward": 5.0, "move_penalty": 1.0 / 5000,
    },
}

ALGO_KEYS = {
    "dqn": {"epsilon_start": 1.0, "epsilon_end": 0.05, "epsilon_decay_steps": 10_000,
            "warmup": None, "hidden_activation": "tanh"},
    "ddpg": {"noise_final": None, "noise_decay_episodes": 0, "warmup": None, "hidden_activation": "tanh"},
    "maddpg": {"noise_final": None, "noise_decay_episodes": 0, "warmup": None, "hidden_activation": "tanh"},
    "ppo": {"horizon": 128, "n_envs": 8, "hidden_activation": "tanh"},
    "dagger": {"beta0": 1.0, "beta_decay": 0.5, "train_epochs": 30, "episodes_per_iteration": 20,
               "hidden_activation": "tanh"},
}

TOP_KEYS = {
    "env": REQUIRED, "algorithm": REQUIRED, "seeds": [0], "total_steps": None, "total_episodes": None,
    "eval": None, "output_dir": "runs/run", "checkpoint_every": None, "metrics_every": None,
    "population": None, "noise": None, "workers": 1,
}
EVAL_KEYS = {"episodes": 20, "seed": 1_000_000_000, "max_steps": None}
POPULATION_KEYS = {"size": 5, "generations": 2, "episodes_per_pair": 10, "train_episodes": 200,
                   "layout": "arena"}
NOISE_KEYS = {"gaussian_sigma": 0.0, "dropout_prob": 0.0, "failed_channels": [], "train": True}


@dataclass
class RunConfig:
    env_name: str
    env: dict
    algorithm: str
    hyperparams: Hyperparams
    algo: dict
    seeds: list
    total_steps: int | None
    total_episodes: int | None
    eval: dict
    output_dir: str
    checkpoint_every: int | None
    metrics_every: int
    population: dict | None = None
    noise: dict | None = None
    workers: int = 1
    source: dict = field(default_factory=dict)

    @property
    def budget_unit(self):
        return "steps" if self.total_steps is not None else "episodes"

    @property
    def budget(self):
        return self.total_steps if self.total_steps is not None else self.total_episodes

    def to_dict(self):
        return copy.deepcopy(self.source)


def _section(raw, schema, path):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(path, "must be a mapping")
    for key in raw:
        if key not in schema:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown key")
    out = {}
    for key, default in schema.items():
        name = f"{path}.{key}" if path else key
        if key in raw:
            out[key] = raw[key]
        elif default is REQUIRED:
            raise ConfigError(name, "missing required key")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _int(value, name, minimum=1, optional=False):
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")
    return value


def _real(value, name, low=None, high=None, strict_low=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"must be a number, got {value!r}")
    value = float(value)
    if low is not None and (value <= low if strict_low else value < low):
        raise ConfigError(name, f"must be {'>' if strict_low else '>='} {low}, got {value}")
    if high is not None and value > high:
        raise ConfigError(name, f"must be <= {high}, got {value}")
    return value


def _check_env(name, env):
    p = f"env"
    if name == "room_clear":
        for k in ("n_red", "n_blue", "hp_max", "attack_damage", "attack_range", "step_cap", "view_size"):
            env[k] = _int(env[k], f"{p}.{k}")
        if env["view_size"] % 2 == 0:
            raise ConfigError(f"{p}.view_size", "must be odd")
        for k in ("kill_reward", "survivor_bonus"):
            env[k] = _real(env[k], f"{p}.{k}")
        if not isinstance(env["layout"], str):
            raise ConfigError(f"{p}.layout", "must be 'default', 'arena' or a path")
        if env["opponent"] not in ("scripted", "none"):
            raise ConfigError(f"{p}.opponent", "must be 'scripted' or 'none'")
    else:
        for k in ("n_layouts", "step_cap", "n_rays"):
            env[k] = _int(env[k], f"{p}.{k}")
        env["layout_seed"] = _int(env["layout_seed"], f"{p}.layout_seed", minimum=0)
        env["spawn_jitter"] = _int(env["spawn_jitter"], f"{p}.spawn_jitter", minimum=0)
        for k in ("step_size", "turn_degrees"):
            env[k] = _real(env[k], f"{p}.{k}", 0.0, strict_low=True)
        for k in ("cover_reward", "move_penalty"):
            env[k] = _real(env[k], f"{p}.{k}", 0.0)
    return env


def _check_algo(name, algo):
    p = "algorithm"
    if algo["hidden_activation"] not in ("tanh", "relu"):
        raise ConfigError(f"{p}.hidden_activation", "must be 'tanh' or 'relu'")
    if name == "dqn":
        for k in ("epsilon_start", "epsilon_end"):
            algo[k] = _real(algo[k], f"{p}.{k}", 0.0, 1.0)
        algo["epsilon_decay_steps"] = _int(algo["epsilon_decay_steps"], f"{p}.epsilon_decay_steps", 0)
    if name in ("ddpg", "maddpg"):
        if algo["noise_final"] is not None:
            algo["noise_final"] = _real(algo["noise_final"], f"{p}.noise_final", 0.0)
        algo["noise_decay_episodes"] = _int(algo["noise_decay_episodes"], f"{p}.noise_decay_episodes", 0)
    if name in ("dqn", "ddpg", "maddpg"):
        algo["warmup"] = _int(algo["warmup"], f"{p}.warmup", 0, optional=True)
    if name == "ppo":
        algo["horizon"] = _int(algo["horizon"], f"{p}.horizon")
        algo["n_envs"] = _int(algo["n_envs"], f"{p}.n_envs")
    if name == "dagger":
        algo["beta0"] = _real(algo["beta0"], f"{p}.beta0", 0.0, 1.0)
        algo["beta_decay"] = _real(algo["beta_decay"], f"{p}.beta_decay", 0.0, 1.0)
        algo["train_epochs"] = _int(algo["train_epochs"], f"{p}.train_epochs")
        algo["episodes_per_iteration"] = _int(algo["episodes_per_iteration"], f"{p}.episodes_per_iteration")
    return algo


def _hyperparams(raw):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("algorithm.hyperparams", "must be a mapping")
    fields = Hyperparams.__dataclass_fields__
    for key in raw:
        if key not in fields:
            raise ConfigError(f"algorithm.hyperparams.{key}", "unknown key")
    for key, value in raw.items():
        name = f"algorithm.hyperparams.{key}"
        if key == "hidden_sizes":
            if not isinstance(value, (list, tuple)) or not value:
                raise ConfigError(name, "must be a non-empty list of integers")
            for v in value:
                _int(v, name)
        elif key == "max_grad_norm" and value is None:
            continue
        elif key in Hyperparams._COUNTS:
            _int(value, name)
        else:
            _real(value, name)
    try:
        return Hyperparams(**raw)
    except ConfigError as exc:
        raise ConfigError(f"algorithm.hyperparams.{exc.key}", str(exc).split(": ", 1)[-1]) from None


def parse_config(text):
    """Validate a YAML document into a :class:`RunConfig` (see module docstring)."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"not valid YAML: {exc}") from None
    return config_from_dict(raw)


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("<document>", "top level must be a mapping")
    top = _section(raw, TOP_KEYS, "")

    env_raw = top["env"]
    if not isinstance(env_raw, dict):
        raise ConfigError("env", "must be a mapping")
    env_name = env_raw.get("name")
    if env_name is None:
        raise ConfigError("env.name", "missing required key")
    if env_name not in ENVIRONMENTS:
        raise ConfigError("env.name", f"unknown environment {env_name!r}; expected one of {ENVIRONMENTS}")
    env = _check_env(env_name, _section({k: v for k, v in env_raw.items() if k != "name"},
                                        ENV_KEYS[env_name], "env"))

    algo_raw = top["algorithm"]
    if not isinstance(algo_raw, dict):
        raise ConfigError("algorithm", "must be a mapping")
    algo_name = algo_raw.get("name")
    if algo_name is None:
        raise ConfigError("algorithm.name", "missing required key")
    if algo_name not in ALGORITHMS:
        raise ConfigError("algorithm.name", f"unknown algorithm {algo_name!r}; expected one of {ALGORITHMS}")
    rest = {k: v for k, v in algo_raw.items() if k not in ("name", "hyperparams")}
    algo = _check_algo(algo_name, _section(rest, ALGO_KEYS[algo_name], "algorithm"))
    hp = _hyperparams(algo_raw.get("hyperparams"))

    if algo_name == "dagger" and env_name != "take_cover":
        raise ConfigError("algorithm.name", "dagger needs the take_cover environment (its expert is the cover oracle)")
    if env_name == "room_clear":
        if env["opponent"] == "none":
            raise ConfigError("env.opponent", "training needs a scripted opponent for the uncontrolled team")
        if algo_name in SINGLE_AGENT and env["n_red"] != 1:
            raise ConfigError("algorithm.name", f"{algo_name} controls a single agent; set env.n_red to 1 or use maddpg")

    seeds = top["seeds"]
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "must be a non-empty list of integers")
    for s in seeds:
        _int(s, "seeds", minimum=0)
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds", "seeds must be distinct")

    steps, episodes = top["total_steps"], top["total_episodes"]
    if (steps is None) == (episodes is None):
        raise ConfigError("total_steps", "set exactly one of total_steps and total_episodes")
    steps = _int(steps, "total_steps", optional=True)
    episodes = _int(episodes, "total_episodes", optional=True)

    ev = _section(top["eval"], EVAL_KEYS, "eval")
    ev["episodes"] = _int(ev["episodes"], "eval.episodes")
    ev["seed"] = _int(ev["seed"], "eval.seed", minimum=0)
    ev["max_steps"] = _int(ev["max_steps"], "eval.max_steps", optional=True)

    if not isinstance(top["output_dir"], str) or not top["output_dir"]:
        raise ConfigError("output_dir", "must be a non-empty path string")
    budget = steps if steps is not None else episodes
    metrics_every = _int(top["metrics_every"], "metrics_every", optional=True) or max(1, budget // 20)
    checkpoint_every = _int(top["checkpoint_every"], "checkpoint_every", optional=True)

    population = None
    if top["population"] is not None:
        population = _section(top["population"], POPULATION_KEYS, "population")
        population["size"] = _int(population["size"], "population.size", minimum=2)
        population["generations"] = _int(population["generations"], "population.generations", minimum=0)
        population["episodes_per_pair"] = _int(population["episodes_per_pair"], "population.episodes_per_pair")
        population["train_episodes"] = _int(population["train_episodes"], "population.train_episodes", minimum=0)
        if algo_name != "maddpg" or env_name != "room_clear":
            raise ConfigError("population", "population self-play needs maddpg on room_clear")
        if population["generations"] > 0 and population["size"] < 5:
            raise ConfigError("population.size", "evolution needs at least 5 members")

    noise = None
    if top["noise"] is not None:
        noise = _section(top["noise"], NOISE_KEYS, "noise")
        noise["gaussian_sigma"] = _real(noise["gaussian_sigma"], "noise.gaussian_sigma", 0.0)
        noise["dropout_prob"] = _real(noise["dropout_prob"], "noise.dropout_prob", 0.0, 1.0)
        fc = noise["failed_channels"]
        if not isinstance(fc, list):
            raise ConfigError("noise.failed_channels", "must be a list of indices")
        for c in fc:
            _int(c, "noise.failed_channels", minimum=0)
        if not isinstance(noise["train"], bool):
            raise ConfigError("noise.train", "must be true or false")

    workers = _int(top["workers"], "workers")
    return RunConfig(env_name, env, algo_name, hp, algo, list(seeds), steps, episodes, ev,
                     top["output_dir"], checkpoint_every, metrics_every, population, noise, workers,
                     source=copy.deepcopy(raw))


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
