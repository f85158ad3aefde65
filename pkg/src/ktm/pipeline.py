"""Training and inference for kernel trajectory maps.

Training projects each observed trajectory onto the representative set,
encodes each target continuation as basis weights relative to the
observation endpoint, and fits the mixture density network from the former
to the latter. Inference runs the same projection on a query and samples
weight vectors from the predicted mixture.
"""

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import archive, mdn
from .errors import InvalidConfigError, InvalidInputError, KtmError, ParseError
from .functional import ContinuousTrajectory, TimeBasis, discretise, fit_weights, time_features
from .kernels import (
    RepresentativeSet,
    as_trajectory,
    discrete_frechet,
    gram_matrix,
    projection_features,
    select_representatives,
)

__all__ = [
    "KtmConfig",
    "KtmModel",
    "TrainingPair",
    "TrajectorySample",
    "train_ktm",
    "predict_mixture",
    "sample_weights",
    "sample_trajectories",
    "ktm_weighted_mean",
    "ktm_closest_component",
    "component_means",
]

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainingPair:
    """An observed prefix and the continuation that followed it."""

    observed: np.ndarray
    target: np.ndarray
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "observed", as_trajectory(self.observed))
        object.__setattr__(self, "target", as_trajectory(self.target))


@dataclass(frozen=True)
class KtmConfig:
    """Every hyperparameter of :func:`train_ktm`.

    ``basis_horizon=None`` places inducing times up to the longest target
    in the training set. ``pin_origin`` constrains every predicted
    component mean to pass exactly through the observation endpoint at
    ``t = 0``, the same constraint the target fits carry softly.
    """

    ell_df: float = 100.0
    representative_step: int = 2
    basis_interval: float = 5.0
    basis_horizon: float = None
    ell_t: float = 10.0
    lambda1: float = 1e-3
    lambda2: float = 1e3
    hidden_dim: int = 64
    num_components: int = 4
    learning_rate: float = 1e-2
    batch_size: int = 32
    epochs: int = 80
    sigma_floor: float = 1e-6
    seed: int = 0
    pin_origin: bool = True

    def __post_init__(self):
        if not self.ell_df > 0:
            raise InvalidConfigError(f"ell_df must be positive, got {self.ell_df}")
        if int(self.representative_step) != self.representative_step or self.representative_step < 1:
            raise InvalidConfigError(
                f"representative_step must be a positive integer, got {self.representative_step}"
            )


@dataclass(frozen=True)
class TrajectorySample:
    """One realisation drawn from a predicted mixture."""

    continuous: ContinuousTrajectory
    component: int
    origin: np.ndarray

    def discretise(self, times):
        return discretise(self.continuous, times, self.origin)


@dataclass
class KtmModel:
    representatives: RepresentativeSet
    ell_df: float
    basis: TimeBasis
    mdn_config: mdn.MdnConfig
    params: mdn.MdnParams
    loss_history: list = field(default_factory=list)
    format_version: int = MODEL_FORMAT_VERSION

    def __post_init__(self):
        self.audit()

    def audit(self):
        """Cross-check dimensions; raises ``KtmError`` on any mismatch."""
        m_xi = len(self.representatives)
        k = 2 * self.basis.size
        problems = []
        if self.mdn_config.input_dim != m_xi:
            problems.append(f"MDN input dim {self.mdn_config.input_dim} != {m_xi} representatives")
        if self.mdn_config.output_dim != k:
            problems.append(f"MDN output dim {self.mdn_config.output_dim} != 2 * {self.basis.size} basis weights")
        if self.params.input_dim != self.mdn_config.input_dim:
            problems.append(f"hidden layer expects {self.params.input_dim} inputs, config says {self.mdn_config.input_dim}")
        if self.params.num_components != self.mdn_config.num_components:
            problems.append(f"parameters have {self.params.num_components} components, config says {self.mdn_config.num_components}")
        if self.params.output_dim != self.mdn_config.output_dim:
            problems.append(f"parameters produce {self.params.output_dim} weights, config says {self.mdn_config.output_dim}")
        if problems:
            raise KtmError("inconsistent model: " + "; ".join(problems))

    @property
    def num_components(self):
        return self.mdn_config.num_components

    def header(self):
        return {
            "format": "ktm-model",
            "format_version": self.format_version,
            "ell_df": self.ell_df,
            "basis": {
                "inducing_times": list(self.basis.inducing_times),
                "ell_t": self.basis.ell_t,
                "lambda1": self.basis.lambda1,
                "lambda2": self.basis.lambda2,
            },
            "mdn": asdict(self.mdn_config),
            "representatives": {
                "count": len(self.representatives),
                "source_indices": list(self.representatives.indices),
            },
            "loss_history": list(self.loss_history),
        }

    def to_bytes(self):
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    def save(self, path):
        """Write a single zip: JSON header, representatives CSV, MDN arrays."""
        rows = io.StringIO()
        writer = csv.writer(rows, lineterminator="\n")
        writer.writerow(["rep", "t", "x", "y"])
        for j, traj in enumerate(self.representatives.trajectories):
            for t, (x, y) in enumerate(traj):
                writer.writerow([j, t, repr(float(x)), repr(float(y))])
        members = {
            "header.json": json.dumps(self.header(), indent=2).encode(),
            "representatives.csv": rows.getvalue().encode(),
        }
        members.update(mdn.params_to_members(self.params))
        archive.write_zip(path, members)

    @classmethod
    def load(cls, path):
        members = archive.read_zip(path)
        try:
            header = json.loads(members["header.json"])
            rep_csv = members["representatives.csv"].decode()
        except KeyError as exc:
            raise ParseError(f"{path}: model archive is missing {exc.args[0]}") from None
        if header.get("format") != "ktm-model":
            raise ParseError(f"{path}: not a ktm model archive")
        if header.get("format_version") != MODEL_FORMAT_VERSION:
            raise ParseError(
                f"{path}: unsupported model format version {header.get('format_version')}"
            )
        reps = _parse_representatives(rep_csv, header["representatives"]["count"])
        return cls(
            representatives=RepresentativeSet(reps, tuple(header["representatives"]["source_indices"])),
            ell_df=header["ell_df"],
            basis=TimeBasis(**header["basis"]),
            mdn_config=mdn.MdnConfig(**header["mdn"]),
            params=mdn.params_from_members(members),
            loss_history=header.get("loss_history", []),
        )


def _parse_representatives(text, count):
    reader = csv.reader(io.StringIO(text))
    if next(reader, None) != ["rep", "t", "x", "y"]:
        raise ParseError("representatives.csv: bad header", line=1)
    points = [[] for _ in range(count)]
    for lineno, row in enumerate(reader, start=2):
        try:
            j, x, y = int(row[0]), float(row[2]), float(row[3])
            points[j].append((x, y))
        except (ValueError, IndexError) as exc:
            raise ParseError(f"representatives.csv: {exc}", line=lineno) from None
    return points


def _relative_target(pair):
    """Target waypoints relative to the observation endpoint, with times 1..n."""
    rel = pair.target - pair.observed[-1]
    return rel, np.arange(1, len(rel) + 1, dtype=np.float64)


def train_ktm(pairs, config=KtmConfig(), representatives=None, callback=None):
    """Fit a :class:`KtmModel` to observed/target pairs.

    Parameters
    ----------
    pairs : list of TrainingPair
    config : KtmConfig
    representatives : RepresentativeSet, optional
        Use these projection centres instead of selecting them from the
        observed trajectories of ``pairs``.
    callback : callable, optional
        Forwarded to :func:`ktm.mdn.train` (per-epoch progress).
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise InvalidInputError(f"training needs at least 2 pairs, got {len(pairs)}")
    observed = [p.observed for p in pairs]
    if representatives is None:
        representatives = select_representatives(observed, config.representative_step)
    log.info("projecting %d observations onto %d representatives", len(observed), len(representatives))
    features = gram_matrix(observed, representatives, config.ell_df)

    horizon = config.basis_horizon
    if horizon is None:
        horizon = max(len(p.target) for p in pairs)
    basis = TimeBasis.evenly_spaced(horizon, config.basis_interval, config.ell_t, config.lambda1, config.lambda2)
    targets = np.empty((len(pairs), 2 * basis.size))
    for n, pair in enumerate(pairs):
        rel, times = _relative_target(pair)
        targets[n] = fit_weights(rel, times, basis).weights

    mdn_config = mdn.MdnConfig(
        input_dim=len(representatives),
        output_dim=2 * basis.size,
        hidden_dim=config.hidden_dim,
        num_components=config.num_components,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        epochs=config.epochs,
        sigma_floor=config.sigma_floor,
        seed=config.seed,
    )
    if features.shape != (len(pairs), mdn_config.input_dim) or targets.shape[1] != mdn_config.output_dim:
        raise KtmError(f"dimension audit failed: features {features.shape}, targets {targets.shape}")
    constraints = None
    if config.pin_origin:
        phi0 = time_features(0.0, basis)
        zero = np.zeros_like(phi0)
        constraints = np.array([np.concatenate([phi0, zero]), np.concatenate([zero, phi0])])
    params, history = mdn.train(mdn_config, features, targets, callback=callback, mean_constraints=constraints)
    return KtmModel(representatives, float(config.ell_df), basis, mdn_config, params, history)


def predict_mixture(model, query):
    """Mixture over basis weights for the continuation of ``query``."""
    feats = projection_features(query, model.representatives, model.ell_df)
    return mdn.forward(model.params, feats, model.mdn_config.sigma_floor)


def sample_weights(mixture, count, rng):
    """Draw ``count`` weight vectors; returns ``(components, weights)``.

    One uniform per sample picks the component by inverse CDF over the
    mixture coefficients; the Gaussian draws follow, in sample-major,
    dimension-minor order.
    """
    if int(count) != count or count < 1:
        raise InvalidInputError(f"sample count must be a positive integer, got {count}")
    rng = np.random.default_rng(rng)
    cdf = np.cumsum(mixture.alphas)
    u = rng.random(count)
    components = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(cdf) - 1)
    noise = rng.standard_normal((count, mixture.means.shape[1]))
    weights = mixture.means[components] + mixture.sigmas[components] * noise
    return components, weights


def sample_trajectories(model, query, count, rng):
    """Realised continuous trajectories for ``query``.

    ``rng`` is a seed or ``numpy.random.Generator``; there is no hidden
    global state, so equal seeds give equal samples.
    """
    query = as_trajectory(query)
    mixture = predict_mixture(model, query)
    components, weights = sample_weights(mixture, count, rng)
    origin = query[-1].copy()
    return [
        TrajectorySample(ContinuousTrajectory.from_weights(w, model.basis), int(r), origin)
        for r, w in zip(components, weights)
    ]


def component_means(model, query):
    """The mean continuous trajectory of every mixture component."""
    mixture = predict_mixture(model, query)
    return [ContinuousTrajectory.from_weights(mu, model.basis) for mu in mixture.means], mixture


def ktm_weighted_mean(model, query):
    """Alpha-weighted combination of the component mean weights."""
    mixture = predict_mixture(model, query)
    return ContinuousTrajectory.from_weights(mixture.alphas @ mixture.means, model.basis)


def ktm_closest_component(model, query, ground_truth, times, metric="frechet"):
    """Component mean closest to ``ground_truth``.

    Each component mean is discretised at ``times`` from the query's last
    waypoint and compared by discrete Frechet distance, or by endpoint
    distance with ``metric="endpoint"``. Ties go to the lower index.

    Returns
    -------
    (ContinuousTrajectory, int)
    """
    if metric not in ("frechet", "endpoint"):
        raise InvalidConfigError(f"metric must be 'frechet' or 'endpoint', got {metric!r}")
    query = as_trajectory(query)
    truth = as_trajectory(ground_truth)
    means, _ = component_means(model, query)
    best, best_dist = 0, np.inf
    for r, traj in enumerate(means):
        pred = discretise(traj, times, query[-1])
        if metric == "frechet":
            dist = discrete_frechet(pred, truth)
        else:
            dist = float(np.hypot(*(pred[-1] - truth[-1])))
        if dist < best_dist:
            best, best_dist = r, dist
    return means[best], best
