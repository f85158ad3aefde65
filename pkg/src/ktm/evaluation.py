"""Baselines, metrics and the repeated train/test experiment."""

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import SegmentationConfig, motion_filter, segment, split_indices
from .errors import InvalidConfigError, InvalidInputError, KtmError
from .functional import discretise
from .kernels import as_trajectory, discrete_frechet, select_representatives
from .pipeline import (
    KtmConfig,
    ktm_closest_component,
    ktm_weighted_mean,
    sample_trajectories,
    train_ktm,
)

__all__ = [
    "METHODS",
    "METRICS",
    "EvalConfig",
    "EvalReport",
    "constant_velocity",
    "endpoint_distance",
    "frechet_metric",
    "evaluate_model",
    "run_experiment",
]

log = logging.getLogger(__name__)

# Report row order. DGM is an external method; its cells stay null so
# published numbers can be pasted alongside.
METHODS = ("KTM-C", "KTM-W", "CV", "DGM")
METRICS = ("ED", "DF")
REPORT_FORMAT_VERSION = 1


def constant_velocity(observed, horizon):
    """Repeat the last observed displacement for ``horizon`` steps."""
    observed = as_trajectory(observed)
    if len(observed) < 2:
        raise InvalidInputError("constant velocity needs at least 2 observed waypoints")
    if int(horizon) != horizon or horizon < 1:
        raise InvalidInputError(f"horizon must be a positive integer, got {horizon}")
    step = observed[-1] - observed[-2]
    return observed[-1] + np.arange(1, int(horizon) + 1)[:, None] * step


def endpoint_distance(pred, truth):
    pred, truth = as_trajectory(pred), as_trajectory(truth)
    return float(np.hypot(*(pred[-1] - truth[-1])))


def frechet_metric(pred, truth):
    return discrete_frechet(pred, truth)


@dataclass(frozen=True)
class EvalConfig:
    ratio: str = "1:1"
    repetitions: int = 5
    test_fraction: float = 0.2
    horizon: int = 20
    closest_metric: str = "frechet"
    min_displacement: float = 0.0
    motion_window: int = 20

    def __post_init__(self):
        SegmentationConfig(self.ratio)
        if int(self.repetitions) != self.repetitions or self.repetitions < 1:
            raise InvalidConfigError(f"repetitions must be a positive integer, got {self.repetitions}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidConfigError(f"horizon must be a positive integer, got {self.horizon}")
        if self.closest_metric not in ("frechet", "endpoint"):
            raise InvalidConfigError(f"closest_metric must be 'frechet' or 'endpoint', got {self.closest_metric!r}")
        if not 0 < self.test_fraction < 1:
            raise InvalidConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


@dataclass
class EvalReport:
    """Per-method, per-metric summaries across repetitions.

    ``std`` is the sample standard deviation (ddof=1) of the per-repetition
    means, and 0 for a single repetition.
    """

    results: dict
    metadata: dict
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures

    def to_dict(self):
        return {
            "format": "ktm-eval-report",
            "format_version": REPORT_FORMAT_VERSION,
            "units": "meters",
            "std_definition": "sample std (ddof=1) of per-repetition means",
            "methods": [
                {
                    "method": method,
                    "metrics": [
                        {"metric": metric, **self.results[method][metric]} for metric in METRICS
                    ],
                }
                for method in METHODS
            ],
            "metadata": self.metadata,
            "failures": self.failures,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self):
        lines = [f"{'':4}{'':4}" + "".join(f"{m:>14}" for m in METHODS)]
        for metric in METRICS:
            cells = []
            for method in METHODS:
                cell = self.results[method][metric]
                if cell["mean"] is None:
                    cells.append(f"{'n/a':>14}")
                else:
                    cells.append(f"{cell['mean']:>8.2f}±{cell['std']:<5.2f}")
            lines.append(f"{'':4}{metric:<4}" + "".join(cells))
        meta = self.metadata
        lines.append(
            f"repetitions={meta['repetitions']} test_examples={meta['test_examples']} "
            f"horizon={meta['horizon']} (std over repetitions, meters)"
        )
        return "\n".join(lines) + "\n"


def _summary(values):
    values = [float(v) for v in values]
    if not values:
        return {"mean": None, "std": None, "per_repetition": []}
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return {"mean": float(np.mean(values)), "std": std, "per_repetition": values}


def evaluate_model(model, pairs, horizon, closest_metric="frechet"):
    """Per-example ED/DF of KTM-C, KTM-W and CV on ``pairs``.

    Each example is scored over ``min(horizon, len(target))`` steps.
    Returns ``{method: {metric: array}}``.
    """
    scores = {m: {k: [] for k in METRICS} for m in METHODS[:3]}
    for pair in pairs:
        steps = min(int(horizon), len(pair.target))
        times = np.arange(1, steps + 1, dtype=float)
        truth = pair.target[:steps]
        origin = pair.observed[-1]
        closest, _ = ktm_closest_component(model, pair.observed, truth, times, closest_metric)
        preds = {
            "KTM-C": discretise(closest, times, origin),
            "KTM-W": discretise(ktm_weighted_mean(model, pair.observed), times, origin),
            "CV": constant_velocity(pair.observed, steps),
        }
        for method, pred in preds.items():
            scores[method]["ED"].append(endpoint_distance(pred, truth))
            scores[method]["DF"].append(frechet_metric(pred, truth))
    return {m: {k: np.array(v) for k, v in d.items()} for m, d in scores.items()}


def _config_hash(ktm_config, eval_config):
    blob = json.dumps({"ktm": asdict(ktm_config), "eval": asdict(eval_config)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def run_experiment(corpus, ktm_config=KtmConfig(), eval_config=EvalConfig(), seed=0, sample_dump=None):
    """Repeated representative-aware train/test evaluation.

    Representatives are selected once from all observed segments (the
    selection is deterministic). Each repetition then draws its own test
    set from the remaining pairs, trains with its own seed and scores
    KTM-C, KTM-W and CV.

    Parameters
    ----------
    corpus : TrajectoryCorpus or sequence of trajectories
    seed : int
        Master seed; repetition seeds are spawned from it.
    sample_dump : str or Path, optional
        Write ``method,sample,t,x,y`` rows for the first test example of
        the first repetition (observed, truth, KTM-W, KTM-C, CV and 20 KTM
        samples).
    """
    pairs = segment(corpus, SegmentationConfig(eval_config.ratio))
    if len(pairs) < 3:
        raise InvalidConfigError(f"only {len(pairs)} usable pairs after segmentation")
    reps = select_representatives([p.observed for p in pairs], ktm_config.representative_step)

    movers = {id(p) for p in motion_filter(pairs, eval_config.min_displacement, eval_config.motion_window)}
    eligible = [id(p) in movers and len(p.observed) >= 2 for p in pairs]

    rep_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(eval_config.repetitions)]
    per_rep = {m: {k: [] for k in METRICS} for m in METHODS}
    failures, test_counts = [], []
    for rep, rep_seed in enumerate(rep_seeds):
        train_idx, test_idx = split_indices(len(pairs), reps.indices, eval_config.test_fraction, rep_seed, eligible)
        train_pairs = [pairs[i] for i in train_idx]
        test_pairs = [pairs[i] for i in test_idx]
        log.info("repetition %d: %d train, %d test", rep, len(train_pairs), len(test_pairs))
        try:
            model = train_ktm(train_pairs, replace(ktm_config, seed=rep_seed), representatives=_reindex(reps, train_idx))
        except KtmError as exc:
            log.error("repetition %d failed: %s", rep, exc)
            failures.append({"repetition": rep, "error": str(exc)})
            continue
        scores = evaluate_model(model, test_pairs, eval_config.horizon, eval_config.closest_metric)
        for method in METHODS[:3]:
            for metric in METRICS:
                per_rep[method][metric].append(float(np.mean(scores[method][metric])))
        test_counts.append(len(test_pairs))
        if sample_dump is not None and rep == 0:
            _dump_samples(sample_dump, model, test_pairs[0], eval_config, rep_seed)

    results = {m: {k: _summary(per_rep[m][k]) for k in METRICS} for m in METHODS}
    metadata = {
        "master_seed": int(seed),
        "repetition_seeds": rep_seeds,
        "config_hash": _config_hash(ktm_config, eval_config),
        "pairs": len(pairs),
        "representatives": len(reps),
        "test_examples": test_counts,
        "repetitions": eval_config.repetitions,
        "horizon": eval_config.horizon,
        "ratio": eval_config.ratio,
        "closest_metric": eval_config.closest_metric,
    }
    return EvalReport(results, metadata, failures)


def _reindex(reps, train_idx):
    # Representatives are indexed into the full pair list; remap them into
    # the training subset they are guaranteed to belong to.
    position = {int(i): n for n, i in enumerate(train_idx)}
    return type(reps)(reps.trajectories, tuple(position[i] for i in reps.indices))


def _dump_samples(path, model, pair, eval_config, seed, count=20):
    steps = min(eval_config.horizon, len(pair.target))
    times = np.arange(1, steps + 1, dtype=float)
    origin = pair.observed[-1]
    truth = pair.target[:steps]
    closest, _ = ktm_closest_component(model, pair.observed, truth, times, eval_config.closest_metric)
    rows = [("observed", 0, np.arange(-len(pair.observed) + 1, 1, dtype=float), pair.observed)]
    rows.append(("truth", 0, times, truth))
    rows.append(("KTM-W", 0, times, discretise(ktm_weighted_mean(model, pair.observed), times, origin)))
    rows.append(("KTM-C", 0, times, discretise(closest, times, origin)))
    rows.append(("CV", 0, times, constant_velocity(pair.observed, steps)))
    for k, sample in enumerate(sample_trajectories(model, pair.observed, count, seed)):
        rows.append(("KTM-sample", k, times, sample.discretise(times)))
    write_samples_csv(path, rows)


def write_samples_csv(path, rows):
    """Write ``(method, sample, times, points)`` groups as ``method,sample,t,x,y``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "sample", "t", "x", "y"])
        for method, sample, times, points in rows:
            for t, (x, y) in zip(times, points):
                writer.writerow([method, sample, repr(float(t)), repr(float(x)), repr(float(y))])
