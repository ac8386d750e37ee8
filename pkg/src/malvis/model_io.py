"""Versioned binary container for trained models.

Layout, all integers little-endian:

    magic      4 bytes   b"MVMD"
    version    uint32    currently 1
    kind_len   uint16    length of the model-kind tag
    kind       utf-8     "knn" | "mlp" | "forest"
    meta_len   uint32    length of the canonical JSON metadata
    meta       utf-8     {"hyper": {...}, "arrays": [{name, dtype, shape}, ...]}
    payload    raw       each array's bytes, C order, in manifest order

The JSON is canonical (sorted keys, no whitespace), so save -> load ->
save reproduces the file byte for byte.
"""

import json
import struct

import numpy as np

from .classifiers import ForestModel, KnnModel, MlpModel, _Tree
from .errors import UsageError

MAGIC = b"MVMD"
VERSION = 1


def _pack(kind, hyper, arrays):
    manifest = [
        {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)}
        for name, arr in arrays
    ]
    meta = json.dumps({"hyper": hyper, "arrays": manifest},
                      sort_keys=True, separators=(",", ":")).encode()
    kind_b = kind.encode()
    blob = [MAGIC, struct.pack("<I", VERSION), struct.pack("<H", len(kind_b)),
            kind_b, struct.pack("<I", len(meta)), meta]
    for _, arr in arrays:
        blob.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(blob)


def _unpack(data):
    if data[:4] != MAGIC:
        raise UsageError("not a model file (bad magic)")
    version = struct.unpack_from("<I", data, 4)[0]
    if version != VERSION:
        raise UsageError(f"unsupported model container version {version}")
    kind_len = struct.unpack_from("<H", data, 8)[0]
    pos = 10
    kind = data[pos : pos + kind_len].decode()
    pos += kind_len
    meta_len = struct.unpack_from("<I", data, pos)[0]
    pos += 4
    meta = json.loads(data[pos : pos + meta_len])
    pos += meta_len
    arrays = {}
    for entry in meta["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = dtype.itemsize * count
        arr = np.frombuffer(data[pos : pos + nbytes], dtype=dtype).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
        pos += nbytes
    return kind, meta["hyper"], arrays


def _knn_arrays(model):
    hyper = {"k": model.k, "weighting": model.weighting, "n_classes": model.n_classes}
    return hyper, [("X", model.X), ("y", model.y)]


def _knn_restore(hyper, arrays):
    return KnnModel(arrays["X"], arrays["y"], hyper["k"], hyper["weighting"], hyper["n_classes"])


def _mlp_arrays(model):
    hyper = {
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "hidden": list(model.hidden),
        "l2_alpha": model.l2_alpha,
        "seed": model.seed,
    }
    arrays = []
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        arrays.append((f"W{i}", W))
        arrays.append((f"b{i}", b))
    return hyper, arrays


def _mlp_restore(hyper, arrays):
    model = MlpModel(hyper["n_features"], hyper["n_classes"], tuple(hyper["hidden"]),
                     hyper["l2_alpha"], hyper["seed"])
    model.weights = [arrays[f"W{i}"] for i in range(len(model.weights))]
    model.biases = [arrays[f"b{i}"] for i in range(len(model.biases))]
    return model


def _forest_arrays(model):
    hyper = {
        "n_classes": model.n_classes,
        "n_trees": model.n_trees,
        "max_depth": model.max_depth,
        "seed": model.seed,
        "n_features": model.n_features,
    }
    offsets = [0]
    feature, threshold, left, right, label = [], [], [], [], []
    for tree in model.trees:
        feature.append(tree.feature)
        threshold.append(tree.threshold)
        left.append(tree.left)
        right.append(tree.right)
        label.append(tree.label)
        offsets.append(offsets[-1] + tree.feature.size)
    return hyper, [
        ("offsets", np.asarray(offsets, dtype=np.int64)),
        ("feature", np.concatenate(feature)),
        ("threshold", np.concatenate(threshold)),
        ("left", np.concatenate(left)),
        ("right", np.concatenate(right)),
        ("label", np.concatenate(label)),
    ]


def _forest_restore(hyper, arrays):
    offsets = arrays["offsets"]
    trees = []
    for i in range(len(offsets) - 1):
        lo, hi = offsets[i], offsets[i + 1]
        tree = _Tree()
        tree.feature = arrays["feature"][lo:hi]
        tree.threshold = arrays["threshold"][lo:hi]
        tree.left = arrays["left"][lo:hi]
        tree.right = arrays["right"][lo:hi]
        tree.label = arrays["label"][lo:hi]
        trees.append(tree)
    return ForestModel(trees, hyper["n_classes"], hyper["n_trees"],
                       hyper["max_depth"], hyper["seed"], hyper["n_features"])


_SAVERS = {"knn": _knn_arrays, "mlp": _mlp_arrays, "forest": _forest_arrays}
_LOADERS = {"knn": _knn_restore, "mlp": _mlp_restore, "forest": _forest_restore}


def save_model(model, path):
    try:
        hyper, arrays = _SAVERS[model.kind](model)
    except KeyError:
        raise UsageError(f"cannot serialize model kind {getattr(model, 'kind', None)!r}")
    with open(path, "wb") as f:
        f.write(_pack(model.kind, hyper, arrays))


def load_model(path):
    with open(path, "rb") as f:
        data = f.read()
    kind, hyper, arrays = _unpack(data)
    if kind not in _LOADERS:
        raise UsageError(f"unknown model kind {kind!r}")
    return _LOADERS[kind](hyper, arrays)
