"""Corpus scanning, manifests, splits, flattening and normalization.

Manifest records go to JSON-lines (one record per line, UTF-8); the
run-level fields (seed, created_at, encoder_config) live in a sidecar
meta JSON so the record file stays byte-identical across re-runs.

Feature matrices use a small binary container, all little-endian:

    magic    4 bytes   b"MVFM"
    version  uint32    currently 1
    rows     uint64
    cols     uint64
    data     rows*cols float32, row-major

plus a plain-text sidecar header (<path>.hdr.txt) with the same fields.
"""

import csv
import json
import math
import os
import random
import struct
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone

import numpy as np

from .errors import UsageError
from .ingest import KB, RawBinary, WIDTH_BINS

MATRIX_MAGIC = b"MVFM"
MATRIX_VERSION = 1

RECORD_FIELDS = ("sample_id", "source_path", "family", "method", "geometry",
                 "image_path", "split", "generated", "flags")


@dataclass
class ManifestRecord:
    sample_id: str
    source_path: str
    family: str
    method: str = ""
    geometry: str = ""
    image_path: str = ""
    split: str = ""
    generated: bool = False
    flags: list = field(default_factory=list)


@dataclass
class DatasetManifest:
    records: list
    seed: int = 0
    created_at: str = ""
    encoder_config: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [r.sample_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise UsageError("sample_id values must be unique")

    @property
    def families(self):
        return sorted({r.family for r in self.records})

    def label_map(self):
        return {fam: i for i, fam in enumerate(self.families)}

    def save(self, path):
        # image paths go to disk relative to the manifest, so a re-run
        # into a different directory yields byte-identical records
        base = os.path.dirname(os.path.abspath(path))
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.records:
                d = asdict(rec)
                if d["image_path"]:
                    d["image_path"] = os.path.relpath(d["image_path"], base)
                f.write(json.dumps(d, sort_keys=True) + "\n")
        meta = {
            "seed": self.seed,
            "created_at": self.created_at,
            "encoder_config": self.encoder_config,
        }
        with open(_meta_path(path), "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path):
        base = os.path.dirname(os.path.abspath(path))
        records = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = ManifestRecord(**json.loads(line))
                    if rec.image_path and not os.path.isabs(rec.image_path):
                        rec.image_path = os.path.normpath(os.path.join(base, rec.image_path))
                    records.append(rec)
        meta = {}
        if os.path.exists(_meta_path(path)):
            with open(_meta_path(path), encoding="utf-8") as f:
                meta = json.load(f)
        return cls(records=records,
                   seed=meta.get("seed", 0),
                   created_at=meta.get("created_at", ""),
                   encoder_config=meta.get("encoder_config", {}))

    def to_csv(self, path):
        base = os.path.dirname(os.path.abspath(path))
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(RECORD_FIELDS)
            for rec in self.records:
                d = asdict(rec)
                if d["image_path"]:
                    d["image_path"] = os.path.relpath(d["image_path"], base)
                d["flags"] = ";".join(d["flags"])
                writer.writerow([d[k] for k in RECORD_FIELDS])


def _meta_path(path):
    return str(path) + ".meta.json"


def now_stamp():
    return datetime.now(timezone.utc).isoformat()


def scan_corpus(root_dir, family_from="subdirectory", label_file=None):
    """Read every regular file under root_dir as a RawBinary.

    Families come from the first-level directory name, or from a label
    file of "relative/path,family" lines.  Ordering is lexicographic by
    relative path; unreadable files are kept with an empty payload and
    an "unreadable" flag.
    """
    root_dir = str(root_dir)
    if not os.path.isdir(root_dir):
        raise UsageError(f"corpus root {root_dir!r} does not exist")
    labels = {}
    if family_from == "label_file":
        if label_file is None:
            raise UsageError("label_file mode requires a label file path")
        with open(label_file, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    rel, fam = line.rsplit(",", 1)
                    labels[rel] = fam

    paths = []
    for dirpath, dirnames, filenames in os.walk(root_dir):
        dirnames.sort()
        for name in filenames:
            full = os.path.join(dirpath, name)
            paths.append((os.path.relpath(full, root_dir), full))
    paths.sort(key=lambda p: p[0])

    records = []
    for rel, full in paths:
        if family_from == "subdirectory":
            parts = rel.split(os.sep)
            family = parts[0] if len(parts) > 1 else "unlabeled"
        else:
            family = labels.get(rel, "unlabeled")
        try:
            with open(full, "rb") as f:
                data = f.read()
            records.append(RawBinary(path=full, family=family, data=data))
        except OSError:
            records.append(RawBinary(path=full, family=family, data=b"", flags=("unreadable",)))
    return records


def corpus_stats(records):
    """Per-family counts and mean sizes (KB) plus a size histogram."""
    if not records:
        raise UsageError("corpus_stats needs at least one record")
    per_family = {}
    for rec in records:
        per_family.setdefault(rec.family, []).append(rec.size_bytes)
    bins = [hi for hi, _ in WIDTH_BINS]
    histogram = {f"<= {hi}KB": 0 for hi in bins}
    histogram[f"> {bins[-1]}KB"] = 0
    for rec in records:
        for hi in bins:
            if rec.size_bytes <= hi * KB:
                histogram[f"<= {hi}KB"] += 1
                break
        else:
            histogram[f"> {bins[-1]}KB"] += 1
    return {
        "total": len(records),
        "families": {
            fam: {
                "count": len(sizes),
                "mean_size_kb": sum(sizes) / len(sizes) / KB,
            }
            for fam, sizes in sorted(per_family.items())
        },
        "size_histogram": histogram,
    }


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def stratified_split(manifest, test_fraction, seed):
    """Assign each record to train or test, stratified per family.

    Per family, round(n * test_fraction) samples go to test via a seeded
    shuffle; the assignment depends only on manifest order and the seed.
    Families with a single sample stay in train with a warning flag, and
    at least one sample per family always remains in train.
    """
    if not 0 < test_fraction < 1:
        raise UsageError("test_fraction must be strictly between 0 and 1")
    by_family = {}
    for i, rec in enumerate(manifest.records):
        by_family.setdefault(rec.family, []).append(i)
    rng = random.Random(seed)
    for fam in sorted(by_family):
        indices = list(by_family[fam])
        if len(indices) == 1:
            rec = manifest.records[indices[0]]
            rec.split = "train"
            if "single-sample-family" not in rec.flags:
                rec.flags.append("single-sample-family")
            continue
        rng.shuffle(indices)
        n_test = min(_round_half_up(len(indices) * test_fraction), len(indices) - 1)
        test_set = set(indices[:n_test])
        for i in by_family[fam]:
            manifest.records[i].split = "test" if i in test_set else "train"
    manifest.seed = seed
    return manifest


def kfold_split(manifest, n_folds, seed):
    """Optional split mode: assign split = "fold0".."fold<k-1>" per record.

    Stratified per family: each family's samples are shuffled with the
    seed and dealt round-robin, so fold sizes differ by at most one
    sample per family.  Pure function of (manifest order, seed).
    """
    if n_folds < 2:
        raise UsageError("k-fold assignment needs at least 2 folds")
    by_family = {}
    for i, rec in enumerate(manifest.records):
        by_family.setdefault(rec.family, []).append(i)
    rng = random.Random(seed)
    for fam in sorted(by_family):
        indices = list(by_family[fam])
        rng.shuffle(indices)
        if len(indices) < n_folds:
            for rec_i in indices:
                rec = manifest.records[rec_i]
                if "family-smaller-than-fold-count" not in rec.flags:
                    rec.flags.append("family-smaller-than-fold-count")
        for pos, rec_i in enumerate(indices):
            manifest.records[rec_i].split = f"fold{pos % n_folds}"
    manifest.seed = seed
    return manifest


def flatten(img):
    """Row-major, channel-interleaved feature vector as float32."""
    return img.flat().astype(np.float32)


class Normalizer:
    """Per-column standardization fitted on the training split only.

    Statistics use the population standard deviation; columns with zero
    spread map to 0.  Math runs in float64 regardless of input dtype.
    """

    def __init__(self):
        self.mu = None
        self.sigma = None

    def fit(self, train_matrix):
        X = np.asarray(train_matrix, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise UsageError("normalizer needs a nonempty 2-D matrix")
        self.mu = X.mean(axis=0)
        self.sigma = X.std(axis=0)
        return self

    def transform(self, X, dtype=np.float64):
        if self.mu is None:
            raise UsageError("normalizer has not been fitted")
        X = np.asarray(X, dtype=np.float64)
        safe = np.where(self.sigma > 0, self.sigma, 1.0)
        out = (X - self.mu) / safe
        if X.ndim == 2:
            out[:, self.sigma == 0] = 0.0
        else:
            out[self.sigma == 0] = 0.0
        return out.astype(dtype, copy=False)

    def save(self, path):
        if self.mu is None:
            raise UsageError("normalizer has not been fitted")
        with open(path, "w") as f:
            json.dump({"mu": self.mu.tolist(), "sigma": self.sigma.tolist()}, f)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            d = json.load(f)
        norm = cls()
        norm.mu = np.asarray(d["mu"], dtype=np.float64)
        norm.sigma = np.asarray(d["sigma"], dtype=np.float64)
        return norm


def fit_normalizer(train_matrix):
    norm = Normalizer().fit(train_matrix)
    return norm.mu, norm.sigma


def apply_normalizer(vec, mu, sigma):
    norm = Normalizer()
    norm.mu = np.asarray(mu, dtype=np.float64)
    norm.sigma = np.asarray(sigma, dtype=np.float64)
    return norm.transform(vec)


def save_matrix(path, matrix):
    """Write a float32 matrix in the MVFM container plus its sidecar."""
    X = np.ascontiguousarray(matrix, dtype="<f4")
    if X.ndim != 2:
        raise UsageError("feature matrices must be 2-D")
    rows, cols = X.shape
    with open(path, "wb") as f:
        f.write(MATRIX_MAGIC)
        f.write(struct.pack("<I", MATRIX_VERSION))
        f.write(struct.pack("<QQ", rows, cols))
        f.write(X.tobytes())
    with open(str(path) + ".hdr.txt", "w") as f:
        f.write(f"magic {MATRIX_MAGIC.decode()}\nversion {MATRIX_VERSION}\n"
                f"rows {rows}\ncols {cols}\ndtype float32le\norder row-major\n")


def load_matrix(path):
    with open(path, "rb") as f:
        if f.read(4) != MATRIX_MAGIC:
            raise UsageError("not a feature-matrix file (bad magic)")
        version = struct.unpack("<I", f.read(4))[0]
        if version != MATRIX_VERSION:
            raise UsageError(f"unsupported matrix container version {version}")
        rows, cols = struct.unpack("<QQ", f.read(16))
        data = np.frombuffer(f.read(rows * cols * 4), dtype="<f4")
    return data.reshape(rows, cols).copy()
