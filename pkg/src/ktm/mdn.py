"""Single-hidden-layer mixture density network in plain numpy.

Maps projection features to a mixture of ``R`` diagonal Gaussians over the
stacked ``2 * M_t`` weight vector of a continuous trajectory. Gradients are
derived by hand; ``tests/test_mdn.py`` checks them against finite
differences.
"""

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from . import archive
from .errors import InvalidConfigError, InvalidInputError, ParseError, TrainingError

__all__ = [
    "MdnConfig",
    "MdnParams",
    "MixtureParams",
    "init_params",
    "forward",
    "nll_loss",
    "loss_gradient",
    "train",
    "mean_projector",
    "save_params",
    "load_params",
]

LOG_2PI = math.log(2.0 * math.pi)
PARAMS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MdnConfig:
    input_dim: int
    output_dim: int
    hidden_dim: int = 64
    num_components: int = 4
    learning_rate: float = 1e-2
    batch_size: int = 32
    epochs: int = 80
    sigma_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "output_dim", "hidden_dim", "num_components", "batch_size", "epochs"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidConfigError(f"{name} must be a positive integer, got {value}")
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise InvalidConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not (self.sigma_floor > 0 and math.isfinite(self.sigma_floor)):
            raise InvalidConfigError(f"sigma_floor must be positive, got {self.sigma_floor}")


@dataclass
class MdnParams:
    """Network weights. Matrices are stored ``(fan_out, fan_in)``.

    The mean and sigma heads produce ``R * K`` outputs laid out
    component-major, i.e. output ``r * K + m`` belongs to component ``r``.
    """

    hidden_w: np.ndarray
    hidden_b: np.ndarray
    alpha_w: np.ndarray
    alpha_b: np.ndarray
    mean_w: np.ndarray
    mean_b: np.ndarray
    sigma_w: np.ndarray
    sigma_b: np.ndarray

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]

    def arrays(self):
        return [getattr(self, name) for name in self.names()]

    def copy(self):
        return MdnParams(*(a.copy() for a in self.arrays()))

    def as_vector(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_vector(self, vector):
        """New params with this instance's shapes, filled from ``vector``."""
        out, pos = [], 0
        for a in self.arrays():
            out.append(np.asarray(vector[pos:pos + a.size], dtype=np.float64).reshape(a.shape))
            pos += a.size
        if pos != len(vector):
            raise InvalidInputError(f"expected {pos} values, got {len(vector)}")
        return MdnParams(*out)

    def zeros_like(self):
        return MdnParams(*(np.zeros_like(a) for a in self.arrays()))

    @property
    def input_dim(self):
        return self.hidden_w.shape[1]

    @property
    def num_components(self):
        return self.alpha_w.shape[0]

    @property
    def output_dim(self):
        return self.mean_w.shape[0] // self.num_components

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass(frozen=True)
class MixtureParams:
    """Mixture of diagonal Gaussians over a weight vector of length ``K``.

    alphas : (R,)
    means, sigmas : (R, K)
    """

    alphas: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray

    @property
    def num_components(self):
        return self.alphas.shape[0]

    def to_dict(self):
        return {
            "alphas": self.alphas.tolist(),
            "means": self.means.tolist(),
            "sigmas": self.sigmas.tolist(),
        }


def init_params(config, rng=None):
    """Zero biases, weights uniform in ``+-1/sqrt(fan_in)``."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    d, h = config.input_dim, config.hidden_dim
    r, k = config.num_components, config.output_dim

    def uniform(fan_out, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    return MdnParams(
        hidden_w=uniform(h, d),
        hidden_b=np.zeros(h),
        alpha_w=uniform(r, h),
        alpha_b=np.zeros(r),
        mean_w=uniform(r * k, h),
        mean_b=np.zeros(r * k),
        sigma_w=uniform(r * k, h),
        sigma_b=np.zeros(r * k),
    )


def _as_batch(features, dim):
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != dim:
        raise InvalidInputError(f"expected features of length {dim}, got shape {np.shape(features)}")
    return x, single


def _forward_batch(params, x, sigma_floor):
    hidden = np.tanh(x @ params.hidden_w.T + params.hidden_b)
    alpha_logits = hidden @ params.alpha_w.T + params.alpha_b
    r, k = params.num_components, params.output_dim
    means = (hidden @ params.mean_w.T + params.mean_b).reshape(-1, r, k)
    raw_sigma = np.exp(hidden @ params.sigma_w.T + params.sigma_b).reshape(-1, r, k)
    sigmas = np.maximum(raw_sigma, sigma_floor)
    return hidden, alpha_logits, means, sigmas, raw_sigma >= sigma_floor


def forward(params, features, sigma_floor=1e-6):
    """Mixture parameters for one feature vector, or a batch of them.

    A 1-D input gives ``alphas (R,)``, ``means (R, K)``; a 2-D batch gives
    a leading batch axis on every field.
    """
    x, single = _as_batch(features, params.input_dim)
    _, alpha_logits, means, sigmas, _ = _forward_batch(params, x, sigma_floor)
    alphas = softmax(alpha_logits, axis=1)
    if single:
        return MixtureParams(alphas[0], means[0], sigmas[0])
    return MixtureParams(alphas, means, sigmas)


def _component_log_density(log_alpha, means, sigmas, w):
    z = (w[:, None, :] - means) / sigmas
    return log_alpha + np.sum(-0.5 * LOG_2PI - np.log(sigmas) - 0.5 * z * z, axis=2)


def nll_loss(mixture, target_weights):
    """Negative log-likelihood of ``target_weights`` under ``mixture``.

    Uses log-sum-exp over components. For batched mixtures (or one mixture
    against a batch of targets) the mean over examples is returned.
    """
    alphas = np.asarray(mixture.alphas, dtype=np.float64)
    means = np.asarray(mixture.means, dtype=np.float64)
    sigmas = np.asarray(mixture.sigmas, dtype=np.float64)
    if np.any(sigmas <= 0):
        raise InvalidInputError("mixture standard deviations must be positive")
    if alphas.ndim == 1:
        alphas, means, sigmas = alphas[None], means[None], sigmas[None]
    w = np.atleast_2d(np.asarray(target_weights, dtype=np.float64))
    if w.shape[-1] != means.shape[-1]:
        raise InvalidInputError(
            f"target has {w.shape[-1]} weights, mixture has {means.shape[-1]}"
        )
    with np.errstate(divide="ignore"):
        log_alpha = np.log(alphas)
    log_comp = _component_log_density(log_alpha, means, sigmas, w)
    return float(-np.mean(logsumexp(log_comp, axis=1)))


def _loss_and_grad(params, x, w, sigma_floor):
    hidden, alpha_logits, means, sigmas, unclamped = _forward_batch(params, x, sigma_floor)
    log_alpha = log_softmax(alpha_logits, axis=1)
    log_comp = _component_log_density(log_alpha, means, sigmas, w)
    log_lik = logsumexp(log_comp, axis=1, keepdims=True)
    losses = -log_lik[:, 0]
    resp = np.exp(log_comp - log_lik)  # posterior component responsibilities
    n = x.shape[0]

    z = (w[:, None, :] - means) / sigmas
    d_alpha_logits = (np.exp(log_alpha) - resp) / n
    d_means = (-resp[:, :, None] * z / sigmas).reshape(n, -1) / n
    d_sigma_logits = (resp[:, :, None] * (1.0 - z * z) * unclamped).reshape(n, -1) / n

    d_hidden = d_alpha_logits @ params.alpha_w + d_means @ params.mean_w + d_sigma_logits @ params.sigma_w
    d_pre = d_hidden * (1.0 - hidden * hidden)
    grad = MdnParams(
        hidden_w=d_pre.T @ x,
        hidden_b=d_pre.sum(axis=0),
        alpha_w=d_alpha_logits.T @ hidden,
        alpha_b=d_alpha_logits.sum(axis=0),
        mean_w=d_means.T @ hidden,
        mean_b=d_means.sum(axis=0),
        sigma_w=d_sigma_logits.T @ hidden,
        sigma_b=d_sigma_logits.sum(axis=0),
    )
    return losses, grad


def loss_gradient(params, features, target_weights, sigma_floor=1e-6):
    """Gradient of the mean NLL of ``forward`` output w.r.t. every parameter.

    Accepts a single example or a batch; returns an ``MdnParams`` of
    gradients.
    """
    x, _ = _as_batch(features, params.input_dim)
    w = np.atleast_2d(np.asarray(target_weights, dtype=np.float64))
    if w.shape != (x.shape[0], params.output_dim):
        raise InvalidInputError(
            f"targets must have shape {(x.shape[0], params.output_dim)}, got {w.shape}"
        )
    return _loss_and_grad(params, x, w, sigma_floor)[1]


def mean_projector(constraints, dim):
    """Orthogonal projector onto the null space of the rows of ``constraints``."""
    c = np.atleast_2d(np.asarray(constraints, dtype=np.float64))
    if c.shape[1] != dim:
        raise InvalidInputError(f"constraint rows must have length {dim}, got {c.shape[1]}")
    q, _ = np.linalg.qr(c.T)
    return np.eye(dim) - q @ q.T


def _project_means(proj, weight, bias, r):
    k = proj.shape[0]
    weight[...] = np.einsum("kl,rlh->rkh", proj, weight.reshape(r, k, -1)).reshape(weight.shape)
    bias[...] = (bias.reshape(r, k) @ proj).reshape(bias.shape)


def train(config, features, targets, params=None, callback=None, mean_constraints=None):
    """Mini-batch SGD on the mixture NLL.

    Parameters
    ----------
    config : MdnConfig
    features : array_like, shape (N, input_dim)
    targets : array_like, shape (N, output_dim)
    params : MdnParams, optional
        Starting point; seeded initialisation when omitted.
    callback : callable, optional
        Called as ``callback(epoch, mean_loss)`` after every epoch.
    mean_constraints : array_like, shape (c, output_dim), optional
        Linear constraints ``C @ mu = 0`` imposed on every component mean.
        The mean head is projected onto the constraint set at
        initialisation and after every step (projected SGD), so the
        constraints hold for any input.

    Returns
    -------
    params : MdnParams
    history : list of float
        Mean per-example loss of each epoch, each example's loss taken
        just before the update its batch contributes to.
    """
    x = np.asarray(features, dtype=np.float64)
    w = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInputError("training needs a non-empty (N, D) feature matrix")
    if x.shape[1] != config.input_dim:
        raise InvalidInputError(f"features have {x.shape[1]} columns, config expects {config.input_dim}")
    if w.shape != (x.shape[0], config.output_dim):
        raise InvalidInputError(f"targets must have shape {(x.shape[0], config.output_dim)}, got {w.shape}")

    rng = np.random.default_rng(config.seed)
    params = init_params(config, rng) if params is None else params.copy()
    proj = None
    if mean_constraints is not None:
        proj = mean_projector(mean_constraints, config.output_dim)
        _project_means(proj, params.mean_w, params.mean_b, config.num_components)
    n = x.shape[0]
    history = []
    losses = np.empty(n)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        # Overflow only happens on the way to divergence, which is reported
        # below with the epoch number.
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                batch_losses, grad = _loss_and_grad(params, x[idx], w[idx], config.sigma_floor)
                losses[idx] = batch_losses
                if config.learning_rate:
                    for p, g in zip(params.arrays(), grad.arrays()):
                        p -= config.learning_rate * g
                    if proj is not None:
                        _project_means(proj, params.mean_w, params.mean_b, config.num_components)
        mean_loss = float(np.mean(losses))
        if not (math.isfinite(mean_loss) and params.is_finite()):
            raise TrainingError(f"training diverged at epoch {epoch} (mean loss {mean_loss})")
        history.append(mean_loss)
        if callback is not None:
            callback(epoch, mean_loss)
    return params, history


def params_to_members(params):
    return {f"{name}.npy": archive.array_bytes(a) for name, a in zip(params.names(), params.arrays())}


def params_from_members(members):
    try:
        return MdnParams(*(archive.array_from_bytes(members[f"{name}.npy"]) for name in MdnParams.names()))
    except KeyError as exc:
        raise ParseError(f"parameter archive is missing {exc.args[0]}") from None


def save_params(path, params, config):
    """Write parameters as ``.npy`` members behind a JSON header."""
    header = {
        "format": "ktm-mdn",
        "format_version": PARAMS_FORMAT_VERSION,
        "dims": {
            "input_dim": params.input_dim,
            "hidden_dim": params.hidden_w.shape[0],
            "num_components": params.num_components,
            "output_dim": params.output_dim,
        },
        "config": asdict(config),
        "seed": config.seed,
    }
    members = {"header.json": json.dumps(header, indent=2, sort_keys=True).encode()}
    members.update(params_to_members(params))
    archive.write_zip(path, members)


def load_params(path):
    """Inverse of :func:`save_params`; returns ``(params, config)``."""
    members = archive.read_zip(path)
    header = json.loads(members["header.json"])
    if header.get("format") != "ktm-mdn" or header.get("format_version") != PARAMS_FORMAT_VERSION:
        raise ParseError(f"{path}: not a version {PARAMS_FORMAT_VERSION} ktm-mdn archive")
    config = MdnConfig(**header["config"])
    params = params_from_members(members)
    dims = header["dims"]
    if (params.input_dim, params.num_components, params.output_dim) != (
        dims["input_dim"], dims["num_components"], dims["output_dim"]
    ):
        raise ParseError(f"{path}: parameter shapes disagree with header dims")
    return params, config
