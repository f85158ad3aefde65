"""Run configuration: a YAML tree of every hyperparameter plus a master seed.

Values are merged as defaults < config file < ``--set`` overrides < flags,
and checked leaf by leaf so errors name the offending key, e.g.
``mdn.num_components: must be an integer >= 1``.
"""

import copy
import math

import yaml

from .errors import InvalidConfigError, KtmError
from .data import RATIOS, SegmentationConfig
from .evaluation import EvalConfig
from .pipeline import KtmConfig

DEFAULTS = {
    "seed": 0,
    "kernel": {
        "ell_df": 100.0,
        "representative_step": 2,
    },
    "basis": {
        "interval": 5.0,
        "horizon": None,
        "ell_t": 10.0,
        "lambda1": 1e-3,
        "lambda2": 1e3,
    },
    "mdn": {
        "hidden_dim": 64,
        "num_components": 4,
        "learning_rate": 1e-2,
        "batch_size": 32,
        "epochs": 80,
        "sigma_floor": 1e-6,
        "pin_origin": True,
    },
    "data": {
        "ratio": "1:1",
        "columns": {"id": "id", "t": "t", "x": "x", "y": "y"},
    },
    "simulate": {
        "num_trajectories": 600,
        "noise": 0.15,
        "offset_std": 1.0,
        "arena": [-10.0, 10.0, -10.0, 10.0],
        "min_points": 20,
        "max_points": 40,
    },
    "eval": {
        "repetitions": 5,
        "test_fraction": 0.2,
        "horizon": 20,
        "closest_metric": "frechet",
        "min_displacement": 0.0,
        "motion_window": 20,
    },
    "predict": {
        "samples": 100,
        "horizon": 20,
    },
}


def _int(lo=None):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int):
            return "must be an integer"
        if lo is not None and v < lo:
            return f"must be an integer >= {lo}"
    return check


def _float(lo=None, strict=False, hi=None, optional=False):
    def check(v):
        if v is None and optional:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            return "must be a finite number"
        if lo is not None and (v <= lo if strict else v < lo):
            return f"must be {'>' if strict else '>='} {lo}"
        if hi is not None and v >= hi:
            return f"must be < {hi}"
    return check


def _choice(options):
    def check(v):
        if v not in options:
            return f"must be one of {', '.join(map(str, options))}"
    return check


def _bool(v):
    if not isinstance(v, bool):
        return "must be true or false"


def _str(v):
    if not isinstance(v, str) or not v:
        return "must be a non-empty string"


def _arena(v):
    if not (isinstance(v, list) and len(v) == 4 and all(_float()(x) is None for x in v)):
        return "must be [xmin, xmax, ymin, ymax]"
    if not (v[1] > v[0] and v[3] > v[2]):
        return "must satisfy xmin < xmax and ymin < ymax"


CHECKS = {
    "seed": _int(0),
    "kernel.ell_df": _float(0, strict=True),
    "kernel.representative_step": _int(1),
    "basis.interval": _float(0, strict=True),
    "basis.horizon": _float(0, optional=True),
    "basis.ell_t": _float(0, strict=True),
    "basis.lambda1": _float(0, strict=True),
    "basis.lambda2": _float(0),
    "mdn.hidden_dim": _int(1),
    "mdn.num_components": _int(1),
    "mdn.learning_rate": _float(0),
    "mdn.batch_size": _int(1),
    "mdn.epochs": _int(1),
    "mdn.sigma_floor": _float(0, strict=True),
    "mdn.pin_origin": _bool,
    "data.ratio": _choice([f"{r}:{s}" for r, s in RATIOS]),
    "data.columns.id": _str,
    "data.columns.t": _str,
    "data.columns.x": _str,
    "data.columns.y": _str,
    "simulate.num_trajectories": _int(1),
    "simulate.noise": _float(0),
    "simulate.offset_std": _float(0),
    "simulate.arena": _arena,
    "simulate.min_points": _int(2),
    "simulate.max_points": _int(2),
    "eval.repetitions": _int(1),
    "eval.test_fraction": _float(0, strict=True, hi=1),
    "eval.horizon": _int(1),
    "eval.closest_metric": _choice(["frechet", "endpoint"]),
    "eval.min_displacement": _float(),
    "eval.motion_window": _int(1),
    "predict.samples": _int(0),
    "predict.horizon": _int(1),
}


def _merge(base, update, prefix=""):
    for key, value in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise InvalidConfigError(f"{path}: unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise InvalidConfigError(f"{path}: must be a mapping")
            _merge(base[key], value, path + ".")
        else:
            if isinstance(value, str) and isinstance(base[key], (int, float)) and not isinstance(base[key], bool):
                try:
                    value = float(value)
                except ValueError:
                    pass
            base[key] = value


def _set_path(tree, dotted, value):
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise InvalidConfigError(f"{dotted}: unknown key")
        node = node[key]
    if keys[-1] not in node or isinstance(node[keys[-1]], dict):
        raise InvalidConfigError(f"{dotted}: unknown key")
    node[keys[-1]] = value


def _parse_value(raw):
    # YAML 1.1 reads "1e-3" (no dot) as a string; accept it as a number.
    value = yaml.safe_load(raw)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    return value


def _get_path(tree, dotted):
    node = tree
    for key in dotted.split("."):
        node = node[key]
    return node


class RunConfig:
    """Validated hyperparameter tree with accessors for each module's config."""

    def __init__(self, tree=None):
        self.tree = copy.deepcopy(DEFAULTS)
        if tree:
            _merge(self.tree, tree)
        self.validate()

    @classmethod
    def load(cls, path=None, overrides=()):
        """Read ``path`` (YAML) and apply ``key.path=value`` overrides."""
        tree = {}
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                try:
                    tree = yaml.safe_load(fh) or {}
                except yaml.YAMLError as exc:
                    raise InvalidConfigError(f"{path}: invalid YAML ({exc})") from None
            if not isinstance(tree, dict):
                raise InvalidConfigError(f"{path}: top level must be a mapping")
        merged = copy.deepcopy(DEFAULTS)
        _merge(merged, tree)
        for item in overrides:
            key, sep, raw = item.partition("=")
            if not sep:
                raise InvalidConfigError(f"override {item!r} must look like key.path=value")
            _set_path(merged, key.strip(), _parse_value(raw))
        return cls(merged)

    def set(self, dotted, value):
        _set_path(self.tree, dotted, value)
        self.validate()

    def __getitem__(self, dotted):
        return _get_path(self.tree, dotted)

    def validate(self):
        for path, check in CHECKS.items():
            problem = check(_get_path(self.tree, path))
            if problem:
                raise InvalidConfigError(f"{path}: {problem}")
        if self["simulate.min_points"] > self["simulate.max_points"]:
            raise InvalidConfigError("simulate.max_points: must be >= simulate.min_points")
        try:
            self.ktm_config()
            self.eval_config()
            SegmentationConfig(self["data.ratio"])
        except KtmError as exc:
            raise InvalidConfigError(f"config: {exc}") from None

    @property
    def seed(self):
        return self.tree["seed"]

    def ktm_config(self, seed=None):
        k, b, m = self.tree["kernel"], self.tree["basis"], self.tree["mdn"]
        return KtmConfig(
            ell_df=float(k["ell_df"]),
            representative_step=k["representative_step"],
            basis_interval=float(b["interval"]),
            basis_horizon=None if b["horizon"] is None else float(b["horizon"]),
            ell_t=float(b["ell_t"]),
            lambda1=float(b["lambda1"]),
            lambda2=float(b["lambda2"]),
            hidden_dim=m["hidden_dim"],
            num_components=m["num_components"],
            learning_rate=float(m["learning_rate"]),
            batch_size=m["batch_size"],
            epochs=m["epochs"],
            sigma_floor=float(m["sigma_floor"]),
            seed=self.seed if seed is None else seed,
            pin_origin=m["pin_origin"],
        )

    def eval_config(self):
        e = self.tree["eval"]
        return EvalConfig(ratio=self["data.ratio"], **e)

    def simulate_kwargs(self):
        s = self.tree["simulate"]
        return {
            "num_pairs": s["num_trajectories"],
            "noise": float(s["noise"]),
            "offset_std": float(s["offset_std"]),
            "arena": tuple(float(v) for v in s["arena"]),
            "min_points": s["min_points"],
            "max_points": s["max_points"],
            "seed": self.seed,
        }

    def to_yaml(self):
        return yaml.safe_dump(self.tree, sort_keys=False, default_flow_style=False)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_yaml())
