"""Trajectory corpora: simulation, CSV ingestion and observed/target splits.

The on-disk format is a headed CSV with columns ``id,t,x,y``; the simulator
writes the same schema.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, ParseError
from .kernels import as_trajectory
from .pipeline import TrainingPair

__all__ = [
    "TrajectoryCorpus",
    "SegmentationConfig",
    "simulate_crossings",
    "load_csv",
    "segment",
    "split_indices",
    "split_train_test",
    "motion_filter",
]

CSV_COLUMNS = ("id", "t", "x", "y")
RATIOS = ((1, 3), (1, 1), (3, 1))


def _id_key(ident):
    try:
        return (0, float(ident), ident)
    except ValueError:
        return (1, 0.0, ident)


@dataclass(frozen=True)
class TrajectoryCorpus:
    """Named trajectories sharing one time-step duration ``dt``."""

    ids: tuple
    trajectories: tuple
    times: tuple = None
    dt: float = 1.0

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        trajs = tuple(as_trajectory(t) for t in self.trajectories)
        if len(ids) != len(trajs):
            raise InvalidInputError("corpus needs exactly one id per trajectory")
        if len(set(ids)) != len(ids):
            raise InvalidInputError("corpus trajectory ids must be unique")
        short = [i for i, t in zip(ids, trajs) if len(t) < 2]
        if short:
            raise InvalidInputError(f"trajectories need at least 2 waypoints: {short[:5]}")
        if self.times is None:
            times = tuple(self.dt * np.arange(len(t), dtype=float) for t in trajs)
        else:
            times = tuple(np.asarray(t, dtype=float) for t in self.times)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "times", times)

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for ident, traj, times in zip(self.ids, self.trajectories, self.times):
                for t, (x, y) in zip(times, traj):
                    writer.writerow([ident, repr(float(t)), repr(float(x)), repr(float(y))])


# Control points of the family-1 centre-line in unit-arena coordinates; the
# second family is its mirror image in x. Both cross the middle heading
# almost straight up, so their late observed segments look alike.
_CROSSING_ARC = np.array([[0.1, 0.05], [0.8, 0.05], [0.2, 0.95], [0.9, 0.95]])


def _bezier(ctrl, s):
    s = s[:, None]
    return (
        (1 - s) ** 3 * ctrl[0]
        + 3 * (1 - s) ** 2 * s * ctrl[1]
        + 3 * (1 - s) * s**2 * ctrl[2]
        + s**3 * ctrl[3]
    )


def _resample_by_arclength(curve, count):
    seg = np.hypot(*np.diff(curve, axis=0).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0.0, arc[-1], count)
    return np.column_stack([np.interp(target, arc, curve[:, 0]), np.interp(target, arc, curve[:, 1])])


def simulate_crossings(
    num_pairs=600,
    noise=0.15,
    seed=0,
    arena=(-10.0, 10.0, -10.0, 10.0),
    offset_std=1.0,
    min_points=20,
    max_points=40,
):
    """Pedestrians crossing a road in two balanced families.

    Family 0 walks from the lower left to the upper right, family 1 from
    the lower right to the upper left. Each trajectory follows its family's
    cubic centre-line shifted sideways by an offset drawn from
    ``N(0, offset_std)``, is resampled at equal arc-length spacing with a
    waypoint count drawn uniformly from ``[min_points, max_points]``, and
    gets ``N(0, noise)`` jitter on every coordinate.

    Parameters
    ----------
    num_pairs : int
        Number of trajectories (each later becomes one observed/target pair).
    arena : (xmin, xmax, ymin, ymax)
        Bounds in meters.

    Returns
    -------
    TrajectoryCorpus
        Ids are ``"<index>-<family>"`` with a zero-padded index, so they sort
        in generation order; ``dt`` is one step.
    """
    xmin, xmax, ymin, ymax = (float(v) for v in arena)
    if not (xmax > xmin and ymax > ymin and all(math.isfinite(v) for v in arena)):
        raise InvalidConfigError(f"degenerate arena bounds {arena}")
    if int(num_pairs) != num_pairs or num_pairs < 1:
        raise InvalidConfigError(f"num_pairs must be a positive integer, got {num_pairs}")
    if noise < 0 or offset_std < 0:
        raise InvalidConfigError("noise and offset_std must be non-negative")
    if not 2 <= min_points <= max_points:
        raise InvalidConfigError(f"need 2 <= min_points <= max_points, got {min_points}, {max_points}")

    scale = np.array([xmax - xmin, ymax - ymin])
    lower = np.array([xmin, ymin])
    s = np.linspace(0.0, 1.0, 2001)
    lines, normals = [], []
    for mirror in (False, True):
        ctrl = _CROSSING_ARC.copy()
        if mirror:
            ctrl[:, 0] = 1.0 - ctrl[:, 0]
        line = lower + _bezier(ctrl, s) * scale
        tangent = np.gradient(line, axis=0)
        tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
        lines.append(line)
        normals.append(np.column_stack([-tangent[:, 1], tangent[:, 0]]))

    rng = np.random.default_rng(seed)
    width = max(4, len(str(int(num_pairs) - 1)))
    ids, trajs = [], []
    for i in range(int(num_pairs)):
        family = i % 2
        offset = rng.normal(0.0, offset_std) if offset_std > 0 else 0.0
        count = int(rng.integers(min_points, max_points + 1))
        path = _resample_by_arclength(lines[family] + offset * normals[family], count)
        if noise > 0:
            path = path + rng.normal(0.0, noise, size=path.shape)
        ids.append(f"{i:0{width}d}-{family}")
        trajs.append(path)
    return TrajectoryCorpus(tuple(ids), tuple(trajs))


def load_csv(path, schema=None):
    """Read an ``id,t,x,y`` CSV into a corpus.

    Parameters
    ----------
    path : str or Path
    schema : dict, optional
        Maps the logical columns ``id, t, x, y`` to header names in the file.

    Rows are grouped by id and sorted by ``t``, so row order on disk does
    not matter. Trajectories with a single waypoint are dropped with a
    warning. ``dt`` is the median time step over the corpus.
    """
    schema = {c: c for c in CSV_COLUMNS} | dict(schema or {})
    groups = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            warnings.warn(f"{path}: empty file, returning an empty corpus", stacklevel=2)
            return TrajectoryCorpus((), ())
        header = [h.strip() for h in header]
        try:
            cols = {c: header.index(schema[c]) for c in CSV_COLUMNS}
        except ValueError:
            missing = [schema[c] for c in CSV_COLUMNS if schema[c] not in header]
            raise ParseError(f"{path}: missing column(s) {missing}", line=1) from None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ident = row[cols["id"]].strip()
                t, x, y = (float(row[cols[c]]) for c in ("t", "x", "y"))
            except IndexError:
                raise ParseError(f"{path}: expected {len(header)} fields, got {len(row)}", line=lineno) from None
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}", line=lineno) from None
            if not all(math.isfinite(v) for v in (t, x, y)):
                raise ParseError(f"{path}: non-finite value", line=lineno)
            rows = groups.setdefault(ident, {})
            if t in rows:
                raise ParseError(f"{path}: duplicate timestamp {t} for id {ident!r}", line=lineno)
            rows[t] = (x, y)

    if not groups:
        warnings.warn(f"{path}: no data rows, returning an empty corpus", stacklevel=2)
        return TrajectoryCorpus((), ())
    ids, trajs, times, dropped = [], [], [], []
    for ident in sorted(groups, key=_id_key):
        ts = sorted(groups[ident])
        if len(ts) < 2:
            dropped.append(ident)
            continue
        ids.append(ident)
        times.append(np.array(ts))
        trajs.append(np.array([groups[ident][t] for t in ts]))
    if dropped:
        warnings.warn(f"{path}: dropped {len(dropped)} single-waypoint trajectories", stacklevel=2)
    steps = np.concatenate([np.diff(t) for t in times]) if times else np.array([])
    dt = float(np.median(steps)) if steps.size else 1.0
    return TrajectoryCorpus(tuple(ids), tuple(trajs), tuple(times), dt)


@dataclass(frozen=True)
class SegmentationConfig:
    """Observed:target length ratio, one of ``1:3``, ``1:1``, ``3:1``."""

    ratio: tuple = field(default=(1, 1))

    def __post_init__(self):
        ratio = self.ratio
        if isinstance(ratio, str):
            try:
                ratio = tuple(int(p) for p in ratio.split(":"))
            except ValueError:
                raise InvalidConfigError(f"cannot parse ratio {self.ratio!r}") from None
        ratio = tuple(ratio)
        if ratio not in RATIOS:
            raise InvalidConfigError(f"ratio must be one of 1:3, 1:1, 3:1, got {self.ratio!r}")
        object.__setattr__(self, "ratio", ratio)

    def split_index(self, length):
        """``round(length * r / (r + s))`` with halves rounded up, in integers."""
        r, s = self.ratio
        return (2 * length * r + r + s) // (2 * (r + s))


def segment(corpus, config=SegmentationConfig()):
    """Split every trajectory into an observed prefix and target suffix.

    Trajectories that would leave either side empty are skipped; the number
    skipped is reported through ``warnings``.
    """
    if not isinstance(config, SegmentationConfig):
        config = SegmentationConfig(config)
    ids = getattr(corpus, "ids", None) or [str(i) for i in range(len(corpus))]
    pairs, skipped = [], 0
    for ident, traj in zip(ids, corpus):
        traj = as_trajectory(traj)
        k = config.split_index(len(traj))
        if k < 1 or k >= len(traj):
            skipped += 1
            continue
        pairs.append(TrainingPair(traj[:k], traj[k:], ident))
    if skipped:
        warnings.warn(f"segment: skipped {skipped} trajectories too short to split", stacklevel=2)
    return pairs


def split_indices(n_items, representative_indices, test_fraction=0.2, seed=0, eligible=None):
    """Index form of :func:`split_train_test`; returns sorted ``(train, test)`` arrays."""
    if not 0 < test_fraction < 1:
        raise InvalidConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    reps = set(int(i) for i in representative_indices)
    pool = [i for i in range(n_items) if i not in reps and (eligible is None or eligible[i])]
    n_test = int(math.floor(test_fraction * len(pool) + 0.5))
    if n_test < 1:
        raise InvalidConfigError(
            f"non-representative pool of {len(pool)} items is too small for test_fraction {test_fraction}"
        )
    rng = np.random.default_rng(seed)
    test = np.sort(rng.choice(np.array(pool, dtype=np.int64), size=n_test, replace=False))
    mask = np.ones(n_items, dtype=bool)
    mask[test] = False
    return np.flatnonzero(mask), test


def split_train_test(items, representative_indices, test_fraction=0.2, seed=0):
    """Hold out a random ``test_fraction`` of the non-representative items.

    Representatives never enter the test set. Everything not drawn for test
    (representatives included) forms the training set.
    """
    items = list(items)
    train, test = split_indices(len(items), representative_indices, test_fraction, seed)
    return [items[i] for i in train], [items[i] for i in test]


def motion_filter(pairs, min_displacement=20.0, window=20):
    """Keep pairs whose target moves more than ``min_displacement`` in ``window`` steps.

    Displacement runs from the last observed waypoint to the target waypoint
    ``window`` steps later (or the final one, if the target is shorter). A
    threshold of zero or less disables the filter.
    """
    pairs = list(pairs)
    if min_displacement <= 0:
        return pairs
    kept = []
    for pair in pairs:
        end = pair.target[min(window, len(pair.target)) - 1]
        if float(np.hypot(*(end - pair.observed[-1]))) > min_displacement:
            kept.append(pair)
    return kept
