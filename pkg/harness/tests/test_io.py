import json
import os

import numpy as np

from malharness.io import (
    label_map_for,
    load_images,
    read_manifest,
    save_image,
    write_manifest,
    write_predictions,
)


def test_manifest_roundtrip_relative_paths(tmp_path):
    img_dir = tmp_path / "images"
    img_dir.mkdir()
    save_image(np.zeros((8, 8, 3), np.uint8), img_dir / "a.png")
    records = [{
        "sample_id": "a", "source_path": "", "family": "f",
        "method": "colormap", "geometry": "truncated",
        "image_path": str(img_dir / "a.png"), "split": "train",
        "generated": False, "flags": [],
    }]
    path = tmp_path / "manifest.jsonl"
    write_manifest(path, records)
    on_disk = json.loads(path.read_text().strip())
    assert on_disk["image_path"] == os.path.join("images", "a.png")
    back = read_manifest(path)
    assert back[0]["image_path"] == str(img_dir / "a.png")


def test_label_map_sorted():
    records = [{"family": "zeta"}, {"family": "alpha"}, {"family": "zeta"}]
    assert label_map_for(records) == {"alpha": 0, "zeta": 1}


def test_load_images_scales_to_unit(tmp_path):
    save_image(np.full((4, 4, 3), 255, np.uint8), tmp_path / "x.png")
    images = load_images([{"image_path": str(tmp_path / "x.png")}])
    assert images.shape == (1, 4, 4, 3)
    assert images.max() == 1.0 and images.dtype == np.float32


def test_predictions_format(tmp_path):
    path = tmp_path / "preds.jsonl"
    write_predictions(path, ["s1", "s2"], [0, 2], [[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]])
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows[0] == {"sample_id": "s1", "label": 0, "probabilities": [0.7, 0.2, 0.1]}
    assert rows[1]["label"] == 2
