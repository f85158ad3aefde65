"""Discrete Frechet distance and the kernel built on it.

Trajectories are ``(T, 2)`` float arrays of ``(x, y)`` waypoints in recording
order. The distance uses the Eiter-Mannila dynamic program with Euclidean
ground distance; the kernel is an RBF with that distance substituted in.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import InvalidConfigError, InvalidInputError

__all__ = [
    "RepresentativeSet",
    "as_trajectory",
    "discrete_frechet",
    "df_kernel",
    "projection_features",
    "gram_matrix",
    "pairwise_frechet",
    "select_representatives",
]


def as_trajectory(points):
    """Validate ``points`` and return it as a ``(T, 2)`` float64 array.

    Raises
    ------
    InvalidInputError
        If the trajectory is empty, not two-dimensional, or has non-finite
        coordinates.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInputError(f"trajectory must have shape (T, 2), got {arr.shape}")
    if arr.shape[0] == 0:
        raise InvalidInputError("trajectory must contain at least one waypoint")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("trajectory coordinates must be finite")
    return arr


def _check_length_scale(ell_df):
    if not (ell_df > 0 and math.isfinite(ell_df)):
        raise InvalidConfigError(f"ell_df must be positive and finite, got {ell_df}")


@dataclass(frozen=True)
class RepresentativeSet:
    """Training trajectories kept as kernel projection centres.

    ``indices`` are positions in the corpus the set was selected from.
    """

    trajectories: list
    indices: tuple = field(default=())

    def __post_init__(self):
        trajs = [as_trajectory(t) for t in self.trajectories]
        if not trajs:
            raise InvalidInputError("representative set must not be empty")
        object.__setattr__(self, "trajectories", trajs)
        idx = tuple(int(i) for i in self.indices) or tuple(range(len(trajs)))
        if len(idx) != len(trajs):
            raise InvalidInputError("one source index is required per representative")
        if len(set(idx)) != len(idx):
            raise InvalidInputError("representative source indices must be unique")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.trajectories)

    def __getitem__(self, j):
        return self.trajectories[j]


@njit(cache=True)
def _frechet(a, b):
    # Rolling single-row version of the Eiter-Mannila table.
    p = a.shape[0]
    q = b.shape[0]
    row = np.empty(q)
    dx = a[0, 0] - b[0, 0]
    dy = a[0, 1] - b[0, 1]
    row[0] = math.sqrt(dx * dx + dy * dy)
    for j in range(1, q):
        dx = a[0, 0] - b[j, 0]
        dy = a[0, 1] - b[j, 1]
        row[j] = max(row[j - 1], math.sqrt(dx * dx + dy * dy))
    for i in range(1, p):
        dx = a[i, 0] - b[0, 0]
        dy = a[i, 1] - b[0, 1]
        diag = row[0]
        row[0] = max(row[0], math.sqrt(dx * dx + dy * dy))
        for j in range(1, q):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            best = min(row[j], row[j - 1], diag)
            diag = row[j]
            row[j] = max(best, math.sqrt(dx * dx + dy * dy))
    return row[q - 1]


@njit(cache=True)
def _cross_frechet(flat_a, off_a, flat_b, off_b, out):
    for i in range(off_a.shape[0] - 1):
        a = flat_a[off_a[i]:off_a[i + 1]]
        for j in range(off_b.shape[0] - 1):
            out[i, j] = _frechet(a, flat_b[off_b[j]:off_b[j + 1]])


@njit(cache=True)
def _self_frechet(flat, off, out):
    n = off.shape[0] - 1
    for i in range(n):
        out[i, i] = 0.0
        a = flat[off[i]:off[i + 1]]
        for j in range(i + 1, n):
            d = _frechet(a, flat[off[j]:off[j + 1]])
            out[i, j] = d
            out[j, i] = d


@njit(cache=True)
def _rbf_inplace(dist, ell_df):
    for i in range(dist.shape[0]):
        for j in range(dist.shape[1]):
            d = dist[i, j]
            dist[i, j] = math.exp(-(d * d) / (2.0 * ell_df))


def _pack(trajectories):
    trajs = [as_trajectory(t) for t in trajectories]
    if not trajs:
        raise InvalidInputError("trajectory collection must not be empty")
    offsets = np.zeros(len(trajs) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(t) for t in trajs])
    return np.ascontiguousarray(np.concatenate(trajs)), offsets


def discrete_frechet(a, b):
    """Discrete Frechet distance between two waypoint sequences.

    Parameters
    ----------
    a, b : array_like
        ``(p, 2)`` and ``(q, 2)`` waypoint arrays.

    Returns
    -------
    float
        Minimum over monotone couplings of the largest paired distance.
        Computed in O(pq) time and O(q) memory.

    Examples
    --------
    >>> discrete_frechet([[0, 0], [2, 0], [4, 0]], [[4, 0], [2, 0], [0, 0]])
    4.0
    """
    return float(_frechet(as_trajectory(a), as_trajectory(b)))


def df_kernel(a, b, ell_df):
    """``exp(-d**2 / (2 * ell_df))`` with ``d`` the discrete Frechet distance.

    ``ell_df`` divides the squared distance directly, so it is in m**2.
    """
    _check_length_scale(ell_df)
    d = discrete_frechet(a, b)
    return math.exp(-(d * d) / (2.0 * ell_df))


def pairwise_frechet(rows, cols=None):
    """Matrix of discrete Frechet distances.

    With ``cols=None`` the symmetric ``N x N`` matrix over ``rows`` is built
    from its upper triangle.
    """
    flat_a, off_a = _pack(rows)
    if cols is None:
        out = np.empty((len(off_a) - 1, len(off_a) - 1))
        _self_frechet(flat_a, off_a, out)
        return out
    flat_b, off_b = _pack(cols)
    out = np.empty((len(off_a) - 1, len(off_b) - 1))
    _cross_frechet(flat_a, off_a, flat_b, off_b, out)
    return out


def gram_matrix(corpus, reps, ell_df):
    """DF-kernel features of every corpus trajectory, shape ``(N, M)``.

    Row ``n`` holds the kernel evaluations of ``corpus[n]`` against each
    representative.
    """
    _check_length_scale(ell_df)
    if not isinstance(reps, RepresentativeSet):
        reps = RepresentativeSet(list(reps))
    out = pairwise_frechet(corpus, reps.trajectories)
    _rbf_inplace(out, float(ell_df))
    return out


def projection_features(query, reps, ell_df):
    """Kernel evaluations of one query against the representative set."""
    return gram_matrix([query], reps, ell_df)[0]


def select_representatives(corpus, step):
    """Pick every ``step``-th trajectory after sorting by distance-column norm.

    Builds the full pairwise discrete Frechet matrix, orders its columns by
    ascending L2 norm (stable, so ties keep corpus order) and keeps columns
    ``0, step, 2*step, ...``. Near-identical trajectories have near-identical
    columns and therefore land next to each other in the ordering, which is
    what keeps duplicates out of the selection.
    """
    corpus = list(corpus)
    if not corpus:
        raise InvalidInputError("cannot select representatives from an empty corpus")
    step = int(step)
    if not 1 <= step <= len(corpus):
        raise InvalidConfigError(f"step must lie in [1, {len(corpus)}], got {step}")
    dist = pairwise_frechet(corpus)
    order = np.argsort(np.linalg.norm(dist, axis=0), kind="stable")
    chosen = [int(i) for i in order[::step]]
    return RepresentativeSet([corpus[i] for i in chosen], tuple(chosen))
