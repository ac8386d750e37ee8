"""Command-line pipeline: extract, dataset, train, eval, compare, stats.

Every command materializes its full configuration (defaults included)
into <out>/runlog.json; `malvis rerun <runlog> --out <dir>` re-executes
the stage and reproduces its artifacts byte for byte.

Exit codes: 0 success, 1 partial failure, 2 usage error.

Width bins for resized geometry are half-open KB intervals (lo, hi]
with 1KB = 1024 bytes; see `malvis extract --help`.
"""

import argparse
import glob
import json
import os
import platform
import sys

import numpy as np
import PIL

from . import __version__
from .classifiers import (
    FOREST_PAPER_TREES,
    forest_fit,
    knn_fit,
    mlp_fit,
    stacked_features,
    stacked_fit,
    vote_ensemble,
)
from .dataset import (
    DatasetManifest,
    Normalizer,
    corpus_stats,
    flatten,
    load_matrix,
    now_stamp,
    save_matrix,
    scan_corpus,
    stratified_split,
)
from .encoders import ColorMap256, read_png
from .errors import MalvisError, UsageError
from .extraction import extract_to_dir
from .fixture import make_fixture_corpus, make_noise_fakes
from .metrics import classification_metrics, confusion, roc_auc
from .model_io import load_model, save_model

MODEL_KINDS = ("knn", "mlp", "forest")
ALL_METHODS = ("grayscale", "colormap", "threegram", "pe")


def _write_runlog(out_dir, command, config, filename="runlog.json"):
    os.makedirs(out_dir, exist_ok=True)
    log = {
        "command": command,
        "config": config,
        "versions": {
            "malvis": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pillow": PIL.__version__,
        },
        "started_at": now_stamp(),
    }
    with open(os.path.join(out_dir, filename), "w") as f:
        json.dump(log, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_sibling_runlog(out_dir, command, config):
    """Run log next to (not inside) a directory that is itself the artifact."""
    out_dir = os.path.abspath(out_dir)
    parent = os.path.dirname(out_dir) or "."
    _write_runlog(parent, command, config,
                  filename=os.path.basename(out_dir) + ".runlog.json")


def cmd_stats(config):
    if config.get("make_fixture"):
        summary = make_fixture_corpus(
            config["out"],
            n_families=config["families"],
            samples_per_family=config["samples"],
            seed=config["seed"],
            benign_samples=config["benign"],
        )
        _write_sibling_runlog(config["out"], "stats", config)
        print(json.dumps(summary, indent=2, sort_keys=True))
        return 0
    if config.get("make_noise_fakes"):
        paths = make_noise_fakes(config["out"], config["make_noise_fakes"],
                                 size=config["size"], seed=config["seed"])
        _write_sibling_runlog(config["out"], "stats", config)
        print(f"wrote {len(paths)} noise images to {config['out']}")
        return 0
    if not config.get("corpus"):
        raise UsageError("stats needs --corpus (or --make-fixture / --make-noise-fakes)")
    records = scan_corpus(config["corpus"], family_from=config["family_from"],
                          label_file=config.get("label_file"))
    stats = corpus_stats(records)
    text = json.dumps(stats, indent=2, sort_keys=True)
    if config.get("out"):
        _write_runlog(config["out"], "stats", config)
        with open(os.path.join(config["out"], "stats.json"), "w") as f:
            f.write(text + "\n")
    print(text)
    return 0


def cmd_extract(config):
    records = scan_corpus(config["corpus"], family_from=config["family_from"],
                          label_file=config.get("label_file"))
    cmap = None
    if config.get("cmap"):
        cmap = ColorMap256.from_file(config["cmap"])
    manifest, errors = extract_to_dir(
        records,
        config["out"],
        method=config["method"],
        geometry=config["geometry"],
        size=config["size"],
        seed=config["seed"],
        workers=config["workers"],
        corpus_root=config["corpus"],
        cmap=cmap,
    )
    _write_runlog(config["out"], "extract", config)
    manifest.save(os.path.join(config["out"], "manifest.jsonl"))
    manifest.to_csv(os.path.join(config["out"], "manifest.csv"))
    ok = len(manifest.records) - len(errors)
    print(f"extracted {ok}/{len(manifest.records)} files "
          f"({config['method']}, {config['geometry']}, {config['size']}x{config['size']})")
    if errors:
        for path, message in errors:
            print(f"  error: {path}: {message}", file=sys.stderr)
        return 1
    return 0


def _load_split_features(manifest, split):
    ids, labels, rows = [], [], []
    label_map = manifest.label_map()
    for rec in manifest.records:
        if rec.split != split or not rec.image_path:
            continue
        rows.append(flatten(read_png(rec.image_path, method=rec.method)))
        ids.append(rec.sample_id)
        labels.append(label_map[rec.family])
    if not rows:
        raise UsageError(f"manifest has no materialized {split!r} records; "
                         "run the dataset stage first")
    return ids, np.asarray(labels, dtype=np.int64), np.vstack(rows)


def cmd_dataset(config):
    manifest = DatasetManifest.load(config["manifest"])
    manifest = stratified_split(manifest, config["split"], config["seed"])
    out = config["out"]
    os.makedirs(out, exist_ok=True)
    _write_runlog(out, "dataset", config)

    train_ids, train_labels, train_raw = _load_split_features(manifest, "train")
    test_ids, test_labels, test_raw = _load_split_features(manifest, "test")

    norm = Normalizer().fit(train_raw)
    save_matrix(os.path.join(out, "train.fm"), norm.transform(train_raw, dtype=np.float32))
    save_matrix(os.path.join(out, "test.fm"), norm.transform(test_raw, dtype=np.float32))
    norm.save(os.path.join(out, "norm.json"))
    manifest.save(os.path.join(out, "manifest.jsonl"))
    manifest.to_csv(os.path.join(out, "manifest.csv"))
    meta = {
        "label_map": manifest.label_map(),
        "train_sample_ids": train_ids,
        "train_labels": [int(v) for v in train_labels],
        "test_sample_ids": test_ids,
        "test_labels": [int(v) for v in test_labels],
        "split": config["split"],
        "seed": config["seed"],
    }
    with open(os.path.join(out, "dataset_meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"dataset ready: {len(train_ids)} train / {len(test_ids)} test, "
          f"{len(meta['label_map'])} classes")
    return 0


def _load_dataset(dataset_dir):
    with open(os.path.join(dataset_dir, "dataset_meta.json")) as f:
        meta = json.load(f)
    train = load_matrix(os.path.join(dataset_dir, "train.fm"))
    test = load_matrix(os.path.join(dataset_dir, "test.fm"))
    return meta, train, test


def _fit_model(kind, X, y, n_classes, config):
    if kind == "knn":
        return knn_fit(X, y, k=config["k"], weighting=config["weighting"],
                       n_classes=n_classes)
    if kind == "mlp":
        return mlp_fit(X, y, n_classes=n_classes, epochs=config["epochs"],
                       learning_rate=config["learning_rate"], l2_alpha=config["l2_alpha"],
                       batch_size=config["batch_size"], seed=config["seed"])
    if kind == "forest":
        return forest_fit(X, y, n_trees=config["n_trees"], max_depth=config["max_depth"],
                          seed=config["seed"], n_classes=n_classes)
    raise UsageError(f"unknown model kind {kind!r}")


def cmd_train(config):
    meta, train, _ = _load_dataset(config["dataset"])
    y = np.asarray(meta["train_labels"], dtype=np.int64)
    model = _fit_model(config["model"], train, y, len(meta["label_map"]), config)
    out_dir = os.path.dirname(os.path.abspath(config["out"])) or "."
    _write_runlog(out_dir, "train", config)
    save_model(model, config["out"])
    print(f"trained {config['model']} on {train.shape[0]} samples -> {config['out']}")
    return 0


def _predict_all(model, X, workers=1):
    if model.kind == "knn":
        return model.predict_batch(X, workers=workers)
    return model.predict_batch(X)


def _write_predictions(path, sample_ids, predictions):
    with open(path, "w") as f:
        for sid, pred in zip(sample_ids, predictions):
            f.write(json.dumps({
                "sample_id": sid,
                "label": int(pred.label),
                "probabilities": [float(p) for p in pred.probabilities],
            }) + "\n")


def _read_predictions(path):
    rows = []
    with open(path) as f:
        for line in f:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def _emit_report(out, report, sample_ids=None, predictions=None):
    os.makedirs(out, exist_ok=True)
    report.to_json(os.path.join(out, "report.json"))
    with open(os.path.join(out, "report.txt"), "w") as f:
        f.write(report.to_text_table())
    report.confusion.to_csv(os.path.join(out, "confusion.csv"))
    if sample_ids is not None and predictions is not None:
        _write_predictions(os.path.join(out, "predictions.jsonl"), sample_ids, predictions)
    print(report.to_text_table())


def _eval_predictions_file(config):
    manifest = DatasetManifest.load(config["manifest"])
    label_map = manifest.label_map()
    by_id = {rec.sample_id: rec for rec in manifest.records}
    rows = _read_predictions(config["predictions"])
    if not rows:
        raise UsageError("predictions file is empty")
    y_true, y_pred, scores = [], [], []
    for row in rows:
        rec = by_id.get(row["sample_id"])
        if rec is None:
            raise UsageError(f"prediction for unknown sample_id {row['sample_id']!r}")
        y_true.append(label_map[rec.family])
        y_pred.append(int(row["label"]))
        probs = row.get("probabilities") or []
        scores.append(float(probs[1]) if len(probs) == 2 else 0.0)
    n_classes = len(label_map)
    auc = None
    if n_classes == 2 and len(set(y_true)) == 2 and any(scores):
        auc = roc_auc(scores, y_true)
    report = classification_metrics(confusion(y_true, y_pred, n_classes), auc=auc)
    _write_runlog(config["out"], "eval", config)
    _emit_report(config["out"], report)
    return 0


def _load_image_dir(path):
    files = sorted(glob.glob(os.path.join(path, "**", "*.png"), recursive=True))
    if not files:
        raise UsageError(f"no PNG images under {path!r}")
    return files, np.vstack([flatten(read_png(p)) for p in files])


def _realfake_round(X, y, test_mask, config):
    norm = Normalizer().fit(X[~test_mask])
    X_train = norm.transform(X[~test_mask], dtype=np.float32)
    X_test = norm.transform(X[test_mask], dtype=np.float32)
    model = _fit_model(config["model"], X_train, y[~test_mask], 2, config)
    preds = _predict_all(model, X_test, workers=config["workers"])
    y_test = y[test_mask]
    auc = roc_auc([float(p.probabilities[1]) for p in preds], y_test)
    report = classification_metrics(
        confusion(y_test, [p.label for p in preds], 2), auc=auc)
    return report, preds


def _eval_realfake(config):
    """Binary real-vs-fake task over two image directories.

    With --folds k the task runs stratified k-fold cross-validation and
    reports per-fold plus mean accuracy and AUC; otherwise one seeded
    stratified split at the configured test fraction.
    """
    real_files, real_X = _load_image_dir(config["real"])
    fake_files, fake_X = _load_image_dir(config["fake"])
    if real_X.shape[1] != fake_X.shape[1]:
        raise UsageError("real and fake images must share geometry")
    X = np.vstack([fake_X, real_X])
    y = np.concatenate([np.zeros(len(fake_files), np.int64),
                        np.ones(len(real_files), np.int64)])
    rng = np.random.default_rng(config["seed"])
    _write_runlog(config["out"], "eval", config)

    folds = config.get("folds") or 0
    if folds:
        fold_of = np.zeros(y.size, dtype=np.int64)
        for cls in (0, 1):
            idx = rng.permutation(np.nonzero(y == cls)[0])
            fold_of[idx] = np.arange(idx.size) % folds
        rounds = []
        for k in range(folds):
            report, _ = _realfake_round(X, y, fold_of == k, config)
            rounds.append(report)
            print(f"fold {k}: accuracy {report.accuracy:.4f}  auc {report.auc:.4f}")
        summary = {
            "folds": folds,
            "per_fold": [{"accuracy": r.accuracy, "auc": r.auc} for r in rounds],
            "mean_accuracy": float(np.mean([r.accuracy for r in rounds])),
            "mean_auc": float(np.mean([r.auc for r in rounds])),
        }
        os.makedirs(config["out"], exist_ok=True)
        with open(os.path.join(config["out"], "crossval.json"), "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
        print(f"mean over {folds} folds: accuracy {summary['mean_accuracy']:.4f}  "
              f"auc {summary['mean_auc']:.4f}")
        return 0

    test_mask = np.zeros(y.size, dtype=bool)
    for cls in (0, 1):
        idx = np.nonzero(y == cls)[0]
        perm = rng.permutation(idx)
        n_test = max(1, int(np.floor(idx.size * config["split"] + 0.5)))
        test_mask[perm[:n_test]] = True
    report, preds = _realfake_round(X, y, test_mask, config)
    all_files = [os.path.basename(f) for f in fake_files + real_files]
    ids = [all_files[i] for i in np.nonzero(test_mask)[0]]
    _emit_report(config["out"], report, ids, preds)
    return 0


def cmd_eval(config):
    if config.get("task") == "realfake":
        if not config.get("real") or not config.get("fake"):
            raise UsageError("realfake task needs --real and --fake directories")
        return _eval_realfake(config)
    if config.get("predictions"):
        if not config.get("manifest"):
            raise UsageError("--predictions evaluation needs --manifest")
        return _eval_predictions_file(config)
    if not config.get("dataset"):
        raise UsageError("eval needs --dataset (or --predictions / --task realfake)")

    meta, train, test = _load_dataset(config["dataset"])
    n_classes = len(meta["label_map"])
    y_test = np.asarray(meta["test_labels"], dtype=np.int64)
    models = [load_model(p) for p in config["model_files"]]
    if not models:
        raise UsageError("eval needs at least one --model-file")

    per_model_test = [_predict_all(m, test, workers=config["workers"]) for m in models]

    if config.get("ensemble") == "vote":
        labels = [vote_ensemble([pm[i] for pm in per_model_test])
                  for i in range(test.shape[0])]
        preds = None
    elif config.get("ensemble") == "stacked":
        emit = [m.kind in config["stack_probs"] for m in models]
        y_train = np.asarray(meta["train_labels"], dtype=np.int64)
        per_model_train = [_predict_all(m, train, workers=config["workers"])
                           for m in models]
        stack_train = np.vstack([
            stacked_features([pm[i] for pm in per_model_train], emit)
            for i in range(train.shape[0])
        ])
        stack_test = np.vstack([
            stacked_features([pm[i] for pm in per_model_test], emit)
            for i in range(test.shape[0])
        ])
        stacker = stacked_fit(stack_train, y_train, n_trees=config["stack_trees"],
                              max_depth=config["max_depth"], seed=config["seed"],
                              n_classes=n_classes)
        preds = stacker.predict_batch(stack_test)
        labels = [p.label for p in preds]
    else:
        if len(models) > 1:
            raise UsageError("multiple model files require --ensemble vote|stacked")
        preds = per_model_test[0]
        labels = [p.label for p in preds]

    auc = None
    if n_classes == 2 and preds is not None:
        auc = roc_auc([float(p.probabilities[1]) for p in preds], y_test)
    report = classification_metrics(confusion(y_test, labels, n_classes), auc=auc)
    _write_runlog(config["out"], "eval", config)
    _emit_report(config["out"], report, meta["test_sample_ids"],
                 preds if preds is not None else None)
    return 0


def cmd_compare(config):
    """Run every (method, model) pair and tabulate test accuracies."""
    out = config["out"]
    os.makedirs(out, exist_ok=True)
    _write_runlog(out, "compare", config)
    grid = {}
    f1_tables = {}
    for method in config["methods"]:
        stage = os.path.join(out, method)
        ex_config = dict(config, method=method, out=stage)
        code = cmd_extract(ex_config)
        if code != 0:
            return code
        ds_config = dict(config, manifest=os.path.join(stage, "manifest.jsonl"),
                         out=os.path.join(stage, "dataset"))
        cmd_dataset(ds_config)
        meta, train, test = _load_dataset(os.path.join(stage, "dataset"))
        y_train = np.asarray(meta["train_labels"], dtype=np.int64)
        y_test = np.asarray(meta["test_labels"], dtype=np.int64)
        n_classes = len(meta["label_map"])
        for kind in config["models"]:
            model = _fit_model(kind, train, y_train, n_classes, config)
            preds = _predict_all(model, test, workers=config["workers"])
            report = classification_metrics(
                confusion(y_test, [p.label for p in preds], n_classes))
            grid[f"{method}/{kind}"] = report.accuracy
            f1_tables[f"{method}/{kind}"] = {
                family: report.per_class[idx]["f1"]
                for family, idx in meta["label_map"].items()
            }
            print(f"{method:>10} x {kind:<8} accuracy {report.accuracy:.4f}")
    result = {"accuracy_grid": grid, "per_family_f1": f1_tables,
              "geometry": config["geometry"], "size": config["size"]}
    with open(os.path.join(out, "compare.json"), "w") as f:
        json.dump(result, f, indent=2, sort_keys=True)
        f.write("\n")
    lines = ["method/model accuracy"]
    for key in sorted(grid):
        lines.append(f"{key:<24} {grid[key]:.4f}")
    with open(os.path.join(out, "compare.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")
    return 0


def cmd_rerun(config):
    with open(config["runlog"]) as f:
        log = json.load(f)
    saved = dict(log["config"])
    if config.get("out"):
        if log["command"] == "train":
            saved["out"] = os.path.join(config["out"], os.path.basename(saved["out"]))
            os.makedirs(config["out"], exist_ok=True)
        else:
            saved["out"] = config["out"]
    return DISPATCH[log["command"]](saved)


DISPATCH = {
    "stats": cmd_stats,
    "extract": cmd_extract,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
}


def _add_model_flags(p):
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--k", type=int, default=20, help="k-NN neighbor count")
    p.add_argument("--weighting", choices=("uniform", "distance"), default="distance")
    p.add_argument("--epochs", type=int, default=60, help="MLP training epochs")
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--l2-alpha", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--n-trees", type=int, default=50)
    p.add_argument("--max-depth", type=int, default=6)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="malvis",
        description="Executables to images to malware-family classifiers.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics / fixture generation")
    p.add_argument("--corpus")
    p.add_argument("--family-from", choices=("subdirectory", "label_file"),
                   default="subdirectory")
    p.add_argument("--label-file")
    p.add_argument("--out")
    p.add_argument("--make-fixture", action="store_true",
                   help="write a synthetic PE corpus instead of reading one")
    p.add_argument("--families", type=int, default=10)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--benign", type=int, default=0,
                   help="also write N samples under a 'benign' family")
    p.add_argument("--make-noise-fakes", type=int, metavar="N",
                   help="write N uniform-noise PNGs (baseline fake images)")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("extract", help="encode binaries to PNG images",
                       description="Widths for --geometry resized come from "
                                   "half-open KB bins (lo, hi], 1KB = 1024 bytes: "
                                   "(0,10]->32 (10,30]->64 (30,60]->128 (60,100]->256 "
                                   "(100,200]->384 (200,500]->512 (500,1000]->768 "
                                   ">1000->1024.")
    p.add_argument("--corpus", required=True)
    p.add_argument("--family-from", choices=("subdirectory", "label_file"),
                   default="subdirectory")
    p.add_argument("--label-file")
    p.add_argument("--method", choices=ALL_METHODS, required=True)
    p.add_argument("--geometry", choices=("truncated", "resized"), default="truncated")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cmap", help="alternative 256-entry colormap file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("dataset", help="split + normalize into feature matrices")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", type=float, default=0.2, help="test fraction")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit one classifier on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    p.add_argument("--out", required=True, help="model file path")
    _add_model_flags(p)

    p = sub.add_parser("eval", help="evaluate models, ensembles, or predictions")
    p.add_argument("--dataset")
    p.add_argument("--model-file", action="append", dest="model_files", default=[])
    p.add_argument("--ensemble", choices=("vote", "stacked"))
    p.add_argument("--stack-probs", default="knn,mlp",
                   help="comma list of model kinds contributing probability vectors")
    p.add_argument("--stack-trees", type=int, default=FOREST_PAPER_TREES)
    p.add_argument("--manifest", help="manifest for --predictions evaluation")
    p.add_argument("--predictions", help="externally produced predictions JSONL")
    p.add_argument("--task", choices=("family", "realfake"), default="family")
    p.add_argument("--real", help="directory of real PNGs (realfake task)")
    p.add_argument("--fake", help="directory of fake PNGs (realfake task)")
    p.add_argument("--model", choices=MODEL_KINDS, default="knn",
                   help="model trained on the fly for the realfake task")
    p.add_argument("--split", type=float, default=0.2)
    p.add_argument("--folds", type=int,
                   help="realfake task: k-fold cross-validation instead of one split")
    p.add_argument("--out", required=True)
    _add_model_flags(p)

    p = sub.add_parser("compare", help="accuracy grid over methods x models")
    p.add_argument("--corpus", required=True)
    p.add_argument("--family-from", choices=("subdirectory", "label_file"),
                   default="subdirectory")
    p.add_argument("--label-file")
    p.add_argument("--methods", default=",".join(ALL_METHODS))
    p.add_argument("--models", default="knn,mlp,forest")
    p.add_argument("--geometry", choices=("truncated", "resized"), default="truncated")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--split", type=float, default=0.2)
    p.add_argument("--cmap")
    p.add_argument("--out", required=True)
    _add_model_flags(p)

    p = sub.add_parser("rerun", help="re-execute a stage from its run log")
    p.add_argument("runlog")
    p.add_argument("--out")

    return parser


def _config_from_args(args):
    config = {k: v for k, v in vars(args).items() if k != "command"}
    for key in ("methods", "models", "stack_probs"):
        if key in config and isinstance(config[key], str):
            config[key] = [v for v in config[key].split(",") if v]
    return config


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _config_from_args(args)
    command = args.command
    try:
        if command == "rerun":
            return cmd_rerun(config)
        return DISPATCH[command](config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except MalvisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
