"""Reference parametric surrogates: a feed-forward ensemble and a random forest.

Both models predict through fixed fitted parameters, so appending an
observation without retraining cannot change their predictions -- the
degeneracy mechanism the batch diagnostics exercise.  Their
``condition`` path therefore comes in two flavors: the default identity
(the lie is discarded entirely) and an explicit full retrain/rebuild on
the augmented data.

The network trainer is deliberately plain: full-batch gradient descent
on squared error with an adaptive step (halved whenever the loss
increases) and early stopping, which keeps every fit a deterministic
function of its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, InvalidInputError, NumericalError, RngStream, as_point
from .gp import PosteriorMoments

__all__ = [
    "NnEnsemble",
    "ForestModel",
    "nn_fit",
    "nn_condition",
    "forest_fit",
    "forest_condition",
]

NN_MEMBERS = 10
NN_HIDDEN = 64
NN_MAX_ITER = 2000
NN_EARLY_STOP_WINDOW = 50
NN_EARLY_STOP_TOL = 1e-6
NN_INITIAL_LR = 0.1

FOREST_TREES = 200
FOREST_MIN_LEAF = 2


# ---------------------------------------------------------------------------
# Neural network ensemble
# ---------------------------------------------------------------------------


class _Member:
    """One 2x64 ReLU network trained by full-batch gradient descent."""

    __slots__ = ("layers",)

    def __init__(self, layers: list[tuple[np.ndarray, np.ndarray]]):
        self.layers = layers

    @classmethod
    def init(cls, dim: int, seed: int) -> "_Member":
        gen = np.random.Generator(np.random.Philox(seed))
        sizes = [dim, NN_HIDDEN, NN_HIDDEN, 1]
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = 1.0 / np.sqrt(fan_in)
            w = gen.uniform(-scale, scale, size=(fan_in, fan_out))
            b = np.zeros(fan_out)
            layers.append((w, b))
        return cls(layers)

    def forward(self, X: np.ndarray) -> np.ndarray:
        h = X
        for w, b in self.layers[:-1]:
            h = np.maximum(h @ w + b, 0.0)
        w, b = self.layers[-1]
        return (h @ w + b)[:, 0]

    def _loss_and_grads(self, X, y):
        acts = [X]
        h = X
        for w, b in self.layers[:-1]:
            h = np.maximum(h @ w + b, 0.0)
            acts.append(h)
        w_out, b_out = self.layers[-1]
        out = (h @ w_out + b_out)[:, 0]
        resid = out - y
        n = y.size
        loss = float(np.mean(resid * resid))
        grads = [None] * len(self.layers)
        delta = (2.0 / n) * resid[:, None]  # (n, 1)
        for li in range(len(self.layers) - 1, -1, -1):
            w, _ = self.layers[li]
            grads[li] = (acts[li].T @ delta, delta.sum(axis=0))
            if li > 0:
                delta = (delta @ w.T) * (acts[li] > 0.0)
        return loss, grads

    def train(self, X: np.ndarray, y: np.ndarray) -> tuple[float, float]:
        """Adaptive-step descent; returns (initial loss, final loss)."""
        lr = NN_INITIAL_LR
        loss, grads = self._loss_and_grads(X, y)
        initial_loss = loss
        history = [loss]
        for _ in range(NN_MAX_ITER):
            cand = [(w - lr * gw, b - lr * gb) for (w, b), (gw, gb) in zip(self.layers, grads)]
            cand_member = _Member(cand)
            cand_loss, cand_grads = cand_member._loss_and_grads(X, y)
            if not np.isfinite(cand_loss):
                lr *= 0.5
                if lr < 1e-15:
                    raise NumericalError("network training diverged (loss not finite)")
                history.append(loss)
            elif cand_loss > loss:
                lr *= 0.5
                history.append(loss)
            else:
                self.layers = cand
                loss, grads = cand_loss, cand_grads
                history.append(loss)
            if len(history) > NN_EARLY_STOP_WINDOW:
                if history[-NN_EARLY_STOP_WINDOW - 1] - history[-1] < NN_EARLY_STOP_TOL:
                    break
        return initial_loss, loss


@dataclass(frozen=True, eq=False)
class NnEnsemble:
    """Ensemble of independently seeded networks over one training set."""

    members: tuple
    data: Dataset
    member_seeds: tuple

    @property
    def dim(self) -> int:
        return self.data.dim

    @property
    def targets(self) -> np.ndarray:
        return self.data.targets_normalized

    def _member_outputs(self, X: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([m.forward(pts) for m in self.members])  # (members, n)

    def predict(self, x) -> PosteriorMoments:
        p = as_point(x, self.dim)
        outs = self._member_outputs(p[None, :])[:, 0]
        return PosteriorMoments(float(np.mean(outs)), float(np.var(outs)))

    def predict_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        outs = self._member_outputs(X)
        return np.mean(outs, axis=0), np.var(outs, axis=0)

    def condition(self, x_star, y_tilde: float, retrain: bool = False,
                  rng: RngStream | None = None) -> "NnEnsemble":
        return nn_condition(self, x_star, y_tilde, retrain=retrain, rng=rng)


def nn_fit(data: Dataset, rng: RngStream, n_members: int = NN_MEMBERS) -> NnEnsemble:
    """Train the ensemble on the full normalized data, one seed per member."""
    if data.n < 4:
        raise InvalidInputError("network ensemble needs at least four observations")
    seeds = tuple(int(s) for s in rng.substream("nn-init").generator.integers(
        0, 2**63 - 1, size=n_members))
    X = data.points
    y = data.targets_normalized
    members = []
    for seed in seeds:
        member = _Member.init(data.dim, seed)
        initial_loss, final_loss = member.train(X, y)
        if not np.isfinite(final_loss):
            raise NumericalError("network training diverged")
        members.append(member)
    return NnEnsemble(tuple(members), data, seeds)


def nn_condition(
    e: NnEnsemble,
    x_star,
    y_tilde: float,
    retrain: bool = False,
    rng: RngStream | None = None,
) -> NnEnsemble:
    """Identity unless ``retrain`` is set, in which case the whole ensemble refits.

    Without retraining the pseudo-observation is discarded outright:
    predictions (and hence the acquisition landscape) are bitwise
    unchanged.  With retraining, the augmented dataset keeps the
    original normalization metadata and fresh member seeds come from
    ``rng``.
    """
    if not retrain:
        return e
    if rng is None:
        raise InvalidInputError("retraining requires an rng for fresh member seeds")
    p = as_point(x_star, e.dim)
    data_new = e.data.with_observation(p, e.data.denormalize(float(y_tilde)))
    return nn_fit(data_new, rng, n_members=len(e.members))


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------


class _TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "value", "indices")

    def __init__(self, value: float, indices: np.ndarray):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.value = value
        self.indices = indices  # rows (into the bootstrap sample) at this node

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _best_split(X: np.ndarray, y: np.ndarray, rows: np.ndarray, min_leaf: int):
    """Variance-reduction split over axis-aligned midpoints; None if no valid split."""
    ys = y[rows]
    n = rows.size
    base = float(np.sum(ys) ** 2) / n
    best = None  # (score_gain, feature, threshold)
    for j in range(X.shape[1]):
        xs = X[rows, j]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        ys_sorted = ys[order]
        prefix = np.cumsum(ys_sorted)
        total = prefix[-1]
        counts = np.arange(1, n)
        # split after position k (1-based count on the left)
        valid = (
            (xs_sorted[:-1] < xs_sorted[1:])
            & (counts >= min_leaf)
            & ((n - counts) >= min_leaf)
        )
        if not np.any(valid):
            continue
        left_sum = prefix[:-1]
        score = left_sum**2 / counts + (total - left_sum) ** 2 / (n - counts)
        score = np.where(valid, score, -np.inf)
        k = int(np.argmax(score))
        gain = float(score[k]) - base
        if gain > 1e-12 and (best is None or float(score[k]) - base > best[0]):
            threshold = 0.5 * (xs_sorted[k] + xs_sorted[k + 1])
            best = (gain, j, threshold)
    return best


def _build_tree(X: np.ndarray, y: np.ndarray, min_leaf: int) -> _TreeNode:
    root = _TreeNode(float(np.mean(y)), np.arange(y.size))
    stack = [root]
    while stack:
        node = stack.pop()
        rows = node.indices
        if rows.size < 2 * min_leaf:
            continue
        split = _best_split(X, y, rows, min_leaf)
        if split is None:
            continue
        _, feature, threshold = split
        mask = X[rows, feature] <= threshold
        left_rows = rows[mask]
        right_rows = rows[~mask]
        node.feature = feature
        node.threshold = threshold
        node.left = _TreeNode(float(np.mean(y[left_rows])), left_rows)
        node.right = _TreeNode(float(np.mean(y[right_rows])), right_rows)
        node.indices = rows
        stack.append(node.left)
        stack.append(node.right)
    return root


def _tree_predict(node: _TreeNode, x: np.ndarray) -> float:
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def _tree_leaf(node: _TreeNode, x: np.ndarray) -> _TreeNode:
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node


@dataclass(frozen=True, eq=False)
class ForestModel:
    """Bagged regression trees with seeded bootstrap indices."""

    trees: tuple
    bootstrap_indices: tuple  # one index array per tree
    data: Dataset
    min_leaf: int

    @property
    def dim(self) -> int:
        return self.data.dim

    @property
    def targets(self) -> np.ndarray:
        return self.data.targets_normalized

    def _tree_values(self, x: np.ndarray) -> np.ndarray:
        return np.array([_tree_predict(t, x) for t in self.trees])

    def predict(self, x) -> PosteriorMoments:
        p = as_point(x, self.dim)
        vals = self._tree_values(p)
        return PosteriorMoments(float(np.mean(vals)), float(np.var(vals)))

    def predict_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        pts = np.atleast_2d(np.asarray(X, dtype=float))
        vals = np.stack([self._tree_values(p) for p in pts], axis=1)  # (trees, n)
        return np.mean(vals, axis=0), np.var(vals, axis=0)

    def condition(self, x_star, y_tilde: float, rebuild: bool = False,
                  rng: RngStream | None = None) -> "ForestModel":
        return forest_condition(self, x_star, y_tilde, rebuild=rebuild, rng=rng)


def forest_fit(
    data: Dataset,
    rng: RngStream,
    n_trees: int = FOREST_TREES,
    min_leaf: int = FOREST_MIN_LEAF,
) -> ForestModel:
    """Fit ``n_trees`` trees, each on a seeded bootstrap resample."""
    if data.n < 2 * min_leaf:
        raise InvalidInputError(f"forest needs at least {2 * min_leaf} observations")
    gen = rng.substream("bootstrap").generator
    X = data.points
    y = data.targets_normalized
    trees = []
    indices = []
    for _ in range(n_trees):
        idx = gen.integers(0, data.n, size=data.n)
        trees.append(_build_tree(X[idx], y[idx], min_leaf))
        indices.append(idx)
    return ForestModel(tuple(trees), tuple(indices), data, min_leaf)


def forest_condition(
    f: ForestModel,
    x_star,
    y_tilde: float,
    rebuild: bool = False,
    rng: RngStream | None = None,
) -> ForestModel:
    """Identity unless ``rebuild`` is set; rebuilding draws fresh bootstrap indices."""
    if not rebuild:
        return f
    if rng is None:
        raise InvalidInputError("rebuilding requires an rng for fresh bootstrap draws")
    p = as_point(x_star, f.dim)
    data_new = f.data.with_observation(p, f.data.denormalize(float(y_tilde)))
    return forest_fit(data_new, rng, n_trees=len(f.trees), min_leaf=f.min_leaf)
