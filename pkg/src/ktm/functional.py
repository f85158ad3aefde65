"""Continuous trajectories as weighted squared-exponential time bases.

A target segment, expressed relative to the last observed waypoint, is
encoded as weights ``w_x, w_y`` such that ``x(t) = w_x @ phi(t)`` and
``y(t) = w_y @ phi(t)``. Time is measured in steps after the last observed
waypoint, so ``t = 0`` is the observation endpoint and the fit is softly
pinned to the origin there.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import InvalidConfigError, InvalidInputError, KtmError
from .kernels import as_trajectory

__all__ = [
    "TimeBasis",
    "ContinuousTrajectory",
    "time_features",
    "fit_weights",
    "penalised_objective",
    "evaluate",
    "discretise",
]


@dataclass(frozen=True)
class TimeBasis:
    """Inducing times and regularisation of the time-feature regression.

    ``ell_t`` divides the squared time difference directly (units steps**2).
    ``lambda1`` is the ridge coefficient and ``lambda2`` the weight of the
    squared penalty enforcing ``x(0) = y(0) = 0``.
    """

    inducing_times: tuple
    ell_t: float = 10.0
    lambda1: float = 1e-3
    lambda2: float = 1e3

    def __post_init__(self):
        times = tuple(float(t) for t in np.atleast_1d(np.asarray(self.inducing_times, dtype=float)))
        if not times:
            raise InvalidConfigError("basis needs at least one inducing time")
        if not all(math.isfinite(t) for t in times):
            raise InvalidConfigError("inducing times must be finite")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidConfigError("inducing times must be strictly increasing")
        if not (self.ell_t > 0 and math.isfinite(self.ell_t)):
            raise InvalidConfigError(f"ell_t must be positive, got {self.ell_t}")
        if not (self.lambda1 > 0 and math.isfinite(self.lambda1)):
            raise InvalidConfigError(f"lambda1 must be positive, got {self.lambda1}")
        if not (self.lambda2 >= 0 and math.isfinite(self.lambda2)):
            raise InvalidConfigError(f"lambda2 must be non-negative, got {self.lambda2}")
        object.__setattr__(self, "inducing_times", times)
        object.__setattr__(self, "ell_t", float(self.ell_t))
        object.__setattr__(self, "lambda1", float(self.lambda1))
        object.__setattr__(self, "lambda2", float(self.lambda2))

    @classmethod
    def evenly_spaced(cls, horizon, interval, ell_t=10.0, lambda1=1e-3, lambda2=1e3):
        """Inducing times ``0, interval, 2*interval, ...`` up to ``horizon``."""
        if not interval > 0:
            raise InvalidConfigError(f"basis interval must be positive, got {interval}")
        if not horizon >= 0:
            raise InvalidConfigError(f"basis horizon must be non-negative, got {horizon}")
        count = int(math.floor(horizon / interval + 1e-9)) + 1
        times = interval * np.arange(count, dtype=float)
        return cls(tuple(times), ell_t, lambda1, lambda2)

    @property
    def size(self):
        return len(self.inducing_times)


@dataclass(frozen=True)
class ContinuousTrajectory:
    """``t -> (w_x @ phi(t), w_y @ phi(t))`` in coordinates relative to the origin."""

    w_x: np.ndarray
    w_y: np.ndarray
    basis: TimeBasis

    def __post_init__(self):
        w_x = np.asarray(self.w_x, dtype=np.float64).reshape(-1)
        w_y = np.asarray(self.w_y, dtype=np.float64).reshape(-1)
        m = self.basis.size
        if w_x.shape != (m,) or w_y.shape != (m,):
            raise InvalidInputError(
                f"weights must have length {m}, got {w_x.shape[0]} and {w_y.shape[0]}"
            )
        if not (np.all(np.isfinite(w_x)) and np.all(np.isfinite(w_y))):
            raise InvalidInputError("weights must be finite")
        object.__setattr__(self, "w_x", w_x)
        object.__setattr__(self, "w_y", w_y)

    @classmethod
    def from_weights(cls, weights, basis):
        """Split a stacked ``[w_x, w_y]`` vector of length ``2 * M_t``."""
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if weights.shape[0] != 2 * basis.size:
            raise InvalidInputError(
                f"stacked weights must have length {2 * basis.size}, got {weights.shape[0]}"
            )
        return cls(weights[: basis.size], weights[basis.size:], basis)

    @property
    def weights(self):
        return np.concatenate([self.w_x, self.w_y])

    def __call__(self, t):
        return evaluate(self, t)


def time_features(t, basis):
    """Squared-exponential features of time ``t``.

    Returns shape ``(M_t,)`` for scalar ``t`` and ``(len(t), M_t)`` for a
    vector of times.
    """
    centres = np.asarray(basis.inducing_times)
    t = np.asarray(t, dtype=np.float64)
    diff = centres - t[..., None]
    return np.exp(-(diff * diff) / (2.0 * basis.ell_t))


def _normal_system(times, basis):
    feats = time_features(np.asarray(times, dtype=np.float64), basis)
    phi0 = time_features(0.0, basis)
    lhs = basis.lambda1 * np.eye(basis.size)
    lhs += basis.lambda2 * np.outer(phi0, phi0)
    lhs += feats.T @ feats
    return feats, lhs


def fit_weights(target, times, basis):
    """Ridge fit of a relative target segment onto the time basis.

    Parameters
    ----------
    target : array_like
        ``(n, 2)`` waypoints relative to the last observed waypoint.
    times : array_like
        ``(n,)`` time offsets of the waypoints, in steps after the
        observation endpoint (typically ``1..n``).
    basis : TimeBasis

    Returns
    -------
    ContinuousTrajectory
        Minimiser of ``sum (c_n - w @ phi(t_n))**2 + lambda1 |w|**2
        + lambda2 (w @ phi(0))**2`` for each coordinate series ``c``.
    """
    target = as_trajectory(target)
    times = np.asarray(times, dtype=np.float64).reshape(-1)
    if times.shape[0] != target.shape[0]:
        raise InvalidInputError(
            f"got {times.shape[0]} times for {target.shape[0]} waypoints"
        )
    if not np.all(np.isfinite(times)):
        raise InvalidInputError("target times must be finite")
    feats, lhs = _normal_system(times, basis)
    rhs = feats.T @ target
    try:
        factor = linalg.cho_factor(lhs, lower=True, check_finite=False)
        w = linalg.cho_solve(factor, rhs, check_finite=False)
    except linalg.LinAlgError as exc:
        raise KtmError(f"time-basis normal equations could not be solved: {exc}") from exc
    return ContinuousTrajectory(w[:, 0], w[:, 1], basis)


def penalised_objective(weights, values, times, basis):
    """Value of the penalised least-squares objective for one coordinate."""
    feats = time_features(np.asarray(times, dtype=np.float64), basis)
    phi0 = time_features(0.0, basis)
    w = np.asarray(weights, dtype=np.float64)
    resid = np.asarray(values, dtype=np.float64) - feats @ w
    return float(resid @ resid + basis.lambda1 * (w @ w) + basis.lambda2 * (w @ phi0) ** 2)


def evaluate(traj, t):
    """Relative position at time ``t``; ``(2,)`` for scalar ``t``, else ``(n, 2)``."""
    feats = time_features(t, traj.basis)
    return np.stack([feats @ traj.w_x, feats @ traj.w_y], axis=-1)


def discretise(traj, times, origin):
    """Absolute waypoints ``origin + evaluate(traj, t)`` for each ``t`` in ``times``."""
    times = np.asarray(times, dtype=np.float64).reshape(-1)
    if times.shape[0] == 0:
        raise InvalidInputError("need at least one time to discretise at")
    origin = np.asarray(origin, dtype=np.float64).reshape(2)
    return origin + evaluate(traj, times)
