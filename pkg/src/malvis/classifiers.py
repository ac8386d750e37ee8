"""Desk-scale classifiers: k-NN, MLP, random forest, and two ensembles.

All fits are deterministic functions of (data, hyperparameters, seed).
Every prediction satisfies label = argmax(probabilities), ties broken by
the lowest class index; numpy's argmax gives exactly that.

Tuned defaults: k-NN k=20 with distance weighting, MLP hidden layers
(100, 100, 100, 20) with relu and L2 penalty 1e-4, forest split
criterion entropy with depth 6.  The forest defaults to 50 trees here
(600 is available via n_trees) to keep desk runs fast.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, UsageError

KNN_DEFAULT_K = 20
FOREST_PAPER_TREES = 600
FOREST_DEFAULT_TREES = 50
FOREST_DEFAULT_DEPTH = 6
MLP_DEFAULT_HIDDEN = (100, 100, 100, 20)
MLP_DEFAULT_ALPHA = 1e-4
MLP_DEFAULT_BATCH = 32


@dataclass
class Prediction:
    """A class label with its full probability vector."""

    label: int
    probabilities: np.ndarray

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if (self.probabilities < -1e-12).any():
            raise UsageError("probabilities must be nonnegative")
        if abs(self.probabilities.sum() - 1.0) > 1e-6:
            raise UsageError("probabilities must sum to 1")
        if self.label != int(np.argmax(self.probabilities)):
            raise UsageError("label must be the argmax of the probabilities")


def _predict_from_probs(probs):
    probs = np.asarray(probs, dtype=np.float64)
    return Prediction(label=int(np.argmax(probs)), probabilities=probs)


# ---------------------------------------------------------------- k-NN


class KnnModel:
    """Memorized training set; prediction scans all neighbors."""

    kind = "knn"

    def __init__(self, train_vectors, train_labels, k, weighting="distance", n_classes=None):
        self.X = np.asarray(train_vectors, dtype=np.float32)
        self.y = np.asarray(train_labels, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise UsageError("training vectors and labels must align")
        if not 1 <= k <= self.X.shape[0]:
            raise UsageError("k must be between 1 and the number of training samples")
        if weighting not in ("uniform", "distance"):
            raise UsageError("weighting must be 'uniform' or 'distance'")
        self.k = k
        self.weighting = weighting
        self.n_classes = int(n_classes if n_classes is not None else self.y.max() + 1)
        self._sq_norms = np.einsum("ij,ij->i", self.X.astype(np.float64), self.X.astype(np.float64))

    def _distances(self, queries):
        q = np.asarray(queries, dtype=np.float64)
        sq = np.einsum("ij,ij->i", q, q)
        d2 = sq[:, None] - 2.0 * q @ self.X.astype(np.float64).T + self._sq_norms[None, :]
        return np.sqrt(np.maximum(d2, 0.0))

    def _predict_one(self, dists):
        # stable k-smallest: ties in distance resolved by training index
        order = np.lexsort((np.arange(dists.size), dists))[: self.k]
        d = dists[order]
        labels = self.y[order]
        if self.weighting == "distance" and (d == 0).any():
            labels = labels[d == 0]
            weights = np.ones(labels.size)
        elif self.weighting == "distance":
            weights = 1.0 / d
        else:
            weights = np.ones(self.k)
        sums = np.bincount(labels, weights=weights, minlength=self.n_classes)
        return _predict_from_probs(sums / sums.sum())

    def predict(self, vec):
        return self.predict_batch(np.asarray(vec)[None, :])[0]

    def predict_batch(self, X, workers=1):
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.X.shape[1]:
            raise UsageError("query dimension does not match training data")
        chunks = np.array_split(np.arange(X.shape[0]), max(workers, 1))
        chunks = [c for c in chunks if c.size]

        def run(idx):
            dists = self._distances(X[idx])
            return [self._predict_one(row) for row in dists]

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run, chunks))
        else:
            results = [run(c) for c in chunks]
        return [p for chunk in results for p in chunk]


def knn_fit(train_vectors, train_labels, k=KNN_DEFAULT_K, weighting="distance", n_classes=None):
    return KnnModel(train_vectors, train_labels, k, weighting, n_classes)


def knn_predict(model, vec):
    return model.predict(vec)


# ---------------------------------------------------------------- MLP


def _relu(z):
    return np.maximum(z, 0.0)


def _softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class MlpModel:
    """Fully connected net: relu hidden layers, softmax output.

    Loss is mean cross-entropy plus l2_alpha * sum of squared weights
    (biases unpenalized), minimized by plain mini-batch gradient descent.
    """

    kind = "mlp"

    def __init__(self, n_features, n_classes, hidden=MLP_DEFAULT_HIDDEN,
                 l2_alpha=MLP_DEFAULT_ALPHA, seed=0):
        if n_classes < 2:
            raise UsageError("need at least 2 output classes")
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self.hidden = tuple(int(h) for h in hidden)
        self.l2_alpha = float(l2_alpha)
        self.seed = int(seed)
        sizes = (self.n_features, *self.hidden, self.n_classes)
        self.layer_sizes = sizes
        rng = np.random.default_rng(seed)
        self.weights = [
            rng.normal(0.0, np.sqrt(2.0 / sizes[i]), size=(sizes[i], sizes[i + 1]))
            for i in range(len(sizes) - 1)
        ]
        self.biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]

    def _forward(self, X):
        activations = [np.asarray(X, dtype=np.float64)]
        pre = []
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ W + b
            pre.append(z)
            activations.append(_relu(z) if i < len(self.weights) - 1 else _softmax(z))
        return activations, pre

    def loss(self, X, y):
        probs = self._forward(X)[0][-1]
        y = np.asarray(y, dtype=np.int64)
        ce = -np.mean(np.log(np.maximum(probs[np.arange(y.size), y], 1e-300)))
        penalty = self.l2_alpha * sum(float(np.sum(W * W)) for W in self.weights)
        return ce + penalty

    def gradients(self, X, y):
        """Analytic gradients of loss() w.r.t. every weight and bias."""
        y = np.asarray(y, dtype=np.int64)
        activations, pre = self._forward(X)
        n = y.size
        delta = activations[-1].copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n
        dWs = [None] * len(self.weights)
        dbs = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            dWs[i] = activations[i].T @ delta + 2.0 * self.l2_alpha * self.weights[i]
            dbs[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0)
        return dWs, dbs

    def fit(self, X, y, epochs=200, learning_rate=0.01, batch_size=MLP_DEFAULT_BATCH):
        X = np.asarray(X)
        y = np.asarray(y, dtype=np.int64)
        rng = np.random.default_rng(self.seed + 1)
        n = X.shape[0]
        # divergence shows up as a non-finite batch loss, not a warning
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(epochs):
                perm = rng.permutation(n)
                for start in range(0, n, batch_size):
                    idx = perm[start : start + batch_size]
                    batch_loss = self._step(X[idx], y[idx], learning_rate)
                    if not np.isfinite(batch_loss):
                        raise DivergenceError(epoch)
        return self

    def _step(self, Xb, yb, lr):
        activations, pre = self._forward(Xb)
        probs = activations[-1]
        n = yb.size
        ce = -np.mean(np.log(np.maximum(probs[np.arange(n), yb], 1e-300)))
        delta = probs.copy()
        delta[np.arange(n), yb] -= 1.0
        delta /= n
        for i in range(len(self.weights) - 1, -1, -1):
            dW = activations[i].T @ delta + 2.0 * self.l2_alpha * self.weights[i]
            db = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0)
            self.weights[i] -= lr * dW
            self.biases[i] -= lr * db
        return ce

    def predict(self, vec):
        return self.predict_batch(np.asarray(vec)[None, :])[0]

    def predict_batch(self, X):
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise UsageError("query dimension does not match training data")
        probs = self._forward(X)[0][-1]
        return [_predict_from_probs(p) for p in probs]


def mlp_fit(train_vectors, train_labels, n_classes=None, hidden=MLP_DEFAULT_HIDDEN,
            epochs=200, learning_rate=0.01, l2_alpha=MLP_DEFAULT_ALPHA,
            batch_size=MLP_DEFAULT_BATCH, seed=0):
    X = np.asarray(train_vectors)
    y = np.asarray(train_labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(y.max() + 1)
    model = MlpModel(X.shape[1], n_classes, hidden=hidden, l2_alpha=l2_alpha, seed=seed)
    return model.fit(X, y, epochs=epochs, learning_rate=learning_rate, batch_size=batch_size)


def mlp_predict(model, vec):
    return model.predict(vec)


# ------------------------------------------------------------- forest


def _counts_entropy(counts):
    """Entropy in bits of one or many count vectors (last axis = classes)."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n > 0, counts / n, 0.0)
        terms = np.where(p > 0, p * np.log2(p), 0.0)
    return -terms.sum(axis=-1)


def best_split(X, y, feature_indices, n_classes):
    """Exhaustive information-gain search over midpoint thresholds.

    Returns (gain, feature, threshold) or None when no split separates
    the node.  Ties keep the first feature in the given order and the
    lowest qualifying threshold.
    """
    n = y.size
    parent = _counts_entropy(np.bincount(y, minlength=n_classes))
    eye = np.eye(n_classes, dtype=np.int64)
    best = None
    for f in feature_indices:
        v = X[:, f]
        order = np.argsort(v, kind="mergesort")
        vs = v[order]
        ys = y[order]
        cuts = np.nonzero(vs[:-1] != vs[1:])[0]
        if cuts.size == 0:
            continue
        cum = np.cumsum(eye[ys], axis=0)
        left = cum[cuts]
        right = cum[-1] - left
        nl = (cuts + 1).astype(np.float64)
        nr = n - nl
        child = (nl * _counts_entropy(left) + nr * _counts_entropy(right)) / n
        gains = parent - child
        j = int(np.argmax(gains))
        if best is None or gains[j] > best[0]:
            threshold = (float(vs[cuts[j]]) + float(vs[cuts[j] + 1])) / 2.0
            best = (float(gains[j]), int(f), threshold)
    return best


class _Tree:
    """One decision tree stored as flat node arrays."""

    def __init__(self):
        self.feature = []   # -1 marks a leaf
        self.threshold = []
        self.left = []
        self.right = []
        self.label = []

    def _add_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.label.append(-1)
        return len(self.feature) - 1

    def grow(self, X, y, rng, max_depth, max_features, n_classes):
        self._grow(X, y, np.arange(y.size), rng, 0, max_depth, max_features, n_classes)
        self.feature = np.asarray(self.feature, dtype=np.int32)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int32)
        self.right = np.asarray(self.right, dtype=np.int32)
        self.label = np.asarray(self.label, dtype=np.int32)
        return self

    def _grow(self, X, y, idx, rng, depth, max_depth, max_features, n_classes):
        node = self._add_node()
        labels = y[idx]
        counts = np.bincount(labels, minlength=n_classes)
        self.label[node] = int(np.argmax(counts))
        if depth >= max_depth or counts.max() == labels.size:
            return node
        feats = rng.choice(X.shape[1], size=min(max_features, X.shape[1]), replace=False)
        split = best_split(X[idx], labels, feats, n_classes)
        if split is None or split[0] <= 0.0:
            return node
        _, f, thr = split
        mask = X[idx, f] < thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self._grow(X, y, idx[mask], rng, depth + 1, max_depth, max_features, n_classes)
        self.right[node] = self._grow(X, y, idx[~mask], rng, depth + 1, max_depth, max_features, n_classes)
        return node

    def predict_labels(self, X):
        out = np.empty(X.shape[0], dtype=np.int32)
        for i, row in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if row[self.feature[node]] < self.threshold[node] else self.right[node]
            out[i] = self.label[node]
        return out

    def depth(self):
        def walk(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))

        return walk(0)


class ForestModel:
    """Bagged entropy trees; probabilities are vote fractions."""

    kind = "forest"

    def __init__(self, trees, n_classes, n_trees, max_depth, seed, n_features):
        self.trees = trees
        self.n_classes = n_classes
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.seed = seed
        self.n_features = n_features

    def predict(self, vec):
        return self.predict_batch(np.asarray(vec)[None, :])[0]

    def predict_batch(self, X):
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise UsageError("query dimension does not match training data")
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.float64)
        for tree in self.trees:
            labels = tree.predict_labels(X)
            votes[np.arange(X.shape[0]), labels] += 1.0
        votes /= len(self.trees)
        return [_predict_from_probs(v) for v in votes]


def forest_fit(train_vectors, train_labels, n_trees=FOREST_DEFAULT_TREES,
               max_depth=FOREST_DEFAULT_DEPTH, seed=0, n_classes=None):
    if n_trees < 1:
        raise UsageError("n_trees must be at least 1")
    if max_depth < 1:
        raise UsageError("max_depth must be at least 1")
    X = np.asarray(train_vectors)
    if X.dtype not in (np.float32, np.float64):
        X = X.astype(np.float64)
    y = np.asarray(train_labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(y.max() + 1)
    max_features = max(1, int(np.sqrt(X.shape[1])))
    # per-tree seeds derive from the master seed, independent of scheduling
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    for tree_seed in seeds:
        rng = np.random.default_rng(tree_seed)
        boot = rng.integers(0, X.shape[0], size=X.shape[0])
        tree = _Tree().grow(X[boot], y[boot], rng, max_depth, max_features, n_classes)
        trees.append(tree)
    return ForestModel(trees, n_classes, n_trees, max_depth, seed, X.shape[1])


def forest_predict(model, vec):
    return model.predict(vec)


# ----------------------------------------------------------- ensembles


def vote_ensemble(predictions):
    """Plurality label; ties go to the highest summed probability, then
    the lowest class index."""
    if not predictions:
        raise UsageError("need at least one prediction to vote")
    n_classes = predictions[0].probabilities.size
    tallies = np.zeros(n_classes)
    prob_sums = np.zeros(n_classes)
    for p in predictions:
        tallies[p.label] += 1
        prob_sums += p.probabilities
    leaders = np.nonzero(tallies == tallies.max())[0]
    if leaders.size == 1:
        return int(leaders[0])
    return int(leaders[np.argmax(prob_sums[leaders])])


def stacked_features(per_model_outputs, emit_probs):
    """Concatenate model outputs into one stacked feature vector.

    Models flagged in emit_probs contribute their full probability
    vector; the rest contribute their class label as one scalar.
    """
    if len(per_model_outputs) != len(emit_probs):
        raise UsageError("one emit_probs flag per model output required")
    parts = []
    for pred, emit in zip(per_model_outputs, emit_probs):
        if emit:
            parts.append(np.asarray(pred.probabilities, dtype=np.float64))
        else:
            parts.append(np.array([float(pred.label)]))
    return np.concatenate(parts)


def stacked_fit(stacked_vectors, labels, n_trees=FOREST_PAPER_TREES,
                max_depth=FOREST_DEFAULT_DEPTH, seed=0, n_classes=None):
    """Train the downstream forest of the stacked ensemble."""
    return forest_fit(stacked_vectors, labels, n_trees=n_trees,
                      max_depth=max_depth, seed=seed, n_classes=n_classes)
