"""Core domain types: points, bounds, datasets, and seeded RNG streams.

Everything downstream (surrogates, acquisition search, the experiment
harness) builds on the small value types defined here.  All types are
immutable values; RNG streams are the only stateful objects and are
never shared between consumers -- each consumer takes a labelled
substream so that adding a new consumer cannot perturb the draws seen
by existing ones.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidInputError",
    "NumericalError",
    "InvalidSetupError",
    "UndefinedResultError",
    "Bounds",
    "Dataset",
    "RngStream",
    "as_point",
    "pairwise_distances",
    "normalize_targets",
    "denormalize_targets",
    "clip_to_bounds",
    "latin_hypercube",
]


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class NumericalError(RuntimeError):
    """Linear algebra failed beyond recoverable jitter.

    ``jitter_levels`` records the diagonal-jitter escalation attempted
    before giving up.
    """

    def __init__(self, message: str, jitter_levels: tuple[float, ...] = ()):
        super().__init__(message)
        self.jitter_levels = tuple(jitter_levels)


class InvalidSetupError(RuntimeError):
    """A diagnostic rig's premises are not satisfied."""


class UndefinedResultError(ValueError):
    """The requested quantity (ratio, test statistic) is undefined for this input."""


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 array, optionally checking its length."""
    p = np.asarray(x, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1)
    if p.ndim != 1 or p.size == 0:
        raise InvalidInputError(f"point must be a non-empty 1-D vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("point has non-finite coordinates")
    if dim is not None and p.size != dim:
        raise InvalidInputError(f"expected dimension {dim}, got {p.size}")
    return p


@dataclass(frozen=True, eq=False)
class Bounds:
    """Axis-aligned box ``[lower_i, upper_i]`` per dimension."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise InvalidInputError("bounds must be two equal-length vectors")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidInputError("bounds must be finite")
        if not np.all(lo < hi):
            raise InvalidInputError("each lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "Bounds":
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, atol: float = 1e-12) -> bool:
        p = as_point(x, self.dim)
        return bool(np.all(p >= self.lower - atol) and np.all(p <= self.upper + atol))

    def from_unit(self, u) -> np.ndarray:
        """Affinely map a point in the unit cube into this box."""
        return self.lower + np.asarray(u, dtype=float) * self.span

    def to_unit(self, x) -> np.ndarray:
        return (as_point(x, self.dim) - self.lower) / self.span

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.lower.tolist(), self.upper.tolist()))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix plus raw observations and target-normalization metadata.

    ``targets`` are stored in raw problem units; surrogates consume
    ``targets_normalized``.  The metadata (``y_mean``, ``y_std``) is
    computed once at construction and deliberately kept frozen when
    observations are appended during batch construction, matching the
    frozen-hyperparameter rule surrogates follow within a batch.
    """

    points: np.ndarray  # (n, d)
    targets: np.ndarray  # (n,) raw units
    y_mean: float
    y_std: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        ys = np.asarray(self.targets, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InvalidInputError("dataset needs a (n, d) design matrix with n >= 1")
        if ys.shape != (pts.shape[0],):
            raise InvalidInputError("targets must be one scalar per design row")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(ys))):
            raise InvalidInputError("dataset contains non-finite values")
        if not (np.isfinite(self.y_std) and self.y_std > 0):
            raise InvalidInputError("y_std must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "targets", ys)

    @classmethod
    def from_observations(cls, points, targets) -> "Dataset":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, mean, std = normalize_targets(targets)
        return cls(pts, np.asarray(targets, dtype=float), mean, std)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def targets_normalized(self) -> np.ndarray:
        return (self.targets - self.y_mean) / self.y_std

    def normalize(self, y: float) -> float:
        return (y - self.y_mean) / self.y_std

    def denormalize(self, y: float) -> float:
        return y * self.y_std + self.y_mean

    def with_observation(self, x, y_raw: float) -> "Dataset":
        """Append one observation, keeping the normalization metadata frozen."""
        p = as_point(x, self.dim)
        return Dataset(
            np.vstack([self.points, p[None, :]]),
            np.append(self.targets, float(y_raw)),
            self.y_mean,
            self.y_std,
        )


def _label_key(label: str) -> int:
    """Stable 32-bit key for a substream label (hash-salt independent)."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


class RngStream:
    """Deterministic counter-based random stream with labelled substreams.

    Built on the Philox bit generator: a given ``(seed, label path)``
    always yields the same draw sequence, and substreams derived with
    distinct labels are statistically independent of each other and of
    the parent, so adding one consumer never perturbs another.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = tuple(_path)
        seq = np.random.SeedSequence(self.seed, spawn_key=self._path)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def substream(self, label: str) -> "RngStream":
        """Fresh independent stream identified by ``label`` under this one."""
        return RngStream(self.seed, self._path + (_label_key(label),))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def __getattr__(self, name):
        # Delegate draw methods (uniform, normal, integers, ...) to the generator.
        if name.startswith("_"):
            raise AttributeError(name)
        return getattr(self._gen, name)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self._path})"


def pairwise_distances(points) -> np.ndarray:
    """Symmetric Euclidean distance matrix with a zero diagonal.

    Accepts a (n, d) array or a sequence of equal-dimension points,
    n >= 2.
    """
    try:
        pts = np.asarray(points, dtype=float)
    except ValueError as exc:
        raise InvalidInputError(f"points have inconsistent dimensions: {exc}") from exc
    if pts.ndim != 2:
        raise InvalidInputError("points must form a (n, d) array of equal-dimension rows")
    if pts.shape[0] < 2:
        raise InvalidInputError("need at least two points")
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.maximum(np.sum(diff * diff, axis=-1), 0.0))
    np.fill_diagonal(d, 0.0)
    return d


def normalize_targets(raw) -> tuple[np.ndarray, float, float]:
    """Center and scale targets to zero mean, unit population std.

    Degenerate inputs (a single value, or all values equal) are
    mean-centered with the scale falling back to 1 so the map stays
    invertible.
    """
    y = np.asarray(raw, dtype=float)
    if y.ndim != 1 or y.size < 1:
        raise InvalidInputError("targets must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("targets contain non-finite values")
    mean = float(np.mean(y))
    std = float(np.std(y))  # population (1/n) convention
    if y.size < 2 or std == 0.0:
        std = 1.0
    return (y - mean) / std, mean, std


def denormalize_targets(normalized, y_mean: float, y_std: float) -> np.ndarray:
    """Inverse of :func:`normalize_targets` given its metadata."""
    return np.asarray(normalized, dtype=float) * y_std + y_mean


def clip_to_bounds(x, bounds: Bounds) -> np.ndarray:
    """Clamp each coordinate of ``x`` into the box."""
    p = as_point(x, bounds.dim)
    return np.clip(p, bounds.lower, bounds.upper)


def latin_hypercube(bounds: Bounds, n: int, rng: RngStream) -> np.ndarray:
    """Latin hypercube design: one jittered sample per 1/n stratum per dimension.

    Stratum assignments are permuted independently per dimension.
    """
    if n < 1:
        raise InvalidInputError("need n >= 1 samples")
    d = bounds.dim
    unit = np.empty((n, d))
    for j in range(d):
        perm = rng.generator.permutation(n)
        jitter = rng.generator.uniform(size=n)
        unit[:, j] = (perm + jitter) / n
    return bounds.lower + unit * bounds.span
