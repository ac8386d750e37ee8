"""File-interface plumbing shared with the main pipeline.

The harness talks to the pipeline exclusively through three formats:
PNG images, the JSON-lines manifest (one record per line; image paths
relative to the manifest file), and the predictions exchange file
(JSON lines of {"sample_id", "label", "probabilities"}).  They are
re-implemented here from their documented layouts; nothing is imported
from the pipeline package.
"""

import json
import os

import numpy as np
from PIL import Image


def read_manifest(path):
    """Manifest records as dicts, with image_path resolved to absolute."""
    base = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("image_path") and not os.path.isabs(rec["image_path"]):
                rec["image_path"] = os.path.normpath(os.path.join(base, rec["image_path"]))
            records.append(rec)
    return records


def write_manifest(path, records):
    """Write manifest records; image paths are stored relative to the file."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            rec = dict(rec)
            if rec.get("image_path"):
                rec["image_path"] = os.path.relpath(rec["image_path"], base)
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def label_map_for(records):
    """Family -> class index, sorted by family name (pipeline convention)."""
    return {fam: i for i, fam in enumerate(sorted({r["family"] for r in records}))}


def load_images(records):
    """Stack manifest images into a float array in [0, 1], NHWC."""
    rows = []
    for rec in records:
        arr = np.asarray(Image.open(rec["image_path"]))
        if arr.ndim == 2:
            arr = arr[:, :, None]
        rows.append(arr)
    return np.stack(rows).astype(np.float32) / 255.0


def save_image(pixels, path):
    """uint8 HWC (or HW1) array to PNG."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim == 3 and pixels.shape[2] == 1:
        pixels = pixels[:, :, 0]
    mode = "L" if pixels.ndim == 2 else "RGB"
    Image.fromarray(pixels, mode=mode).save(path, format="PNG")


def write_predictions(path, sample_ids, labels, probabilities):
    with open(path, "w") as f:
        for sid, label, probs in zip(sample_ids, labels, probabilities):
            f.write(json.dumps({
                "sample_id": sid,
                "label": int(label),
                "probabilities": [float(p) for p in probs],
            }) + "\n")


def write_runlog(out_dir, command, config, extra=None):
    import platform

    import torch

    os.makedirs(out_dir, exist_ok=True)
    log = {
        "command": command,
        "config": config,
        "versions": {"python": platform.python_version(), "torch": torch.__version__,
                     "numpy": np.__version__},
    }
    if extra:
        log.update(extra)
    with open(os.path.join(out_dir, "runlog.json"), "w") as f:
        json.dump(log, f, indent=2, sort_keys=True)
        f.write("\n")
