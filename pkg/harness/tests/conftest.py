import os

import numpy as np
import pytest

from malharness.io import save_image, write_manifest


def make_toy_corpus(root, families=("famA", "famB"), per_family=16, size=128,
                    test_fraction=0.25, seed=0):
    """Constant-value images per family (plus light noise): separable by
    construction.  Returns the manifest path."""
    rng = np.random.default_rng(seed)
    values = np.linspace(40, 215, num=len(families)).astype(np.uint8)
    records = []
    for fam, value in zip(families, values):
        fam_dir = os.path.join(root, fam)
        os.makedirs(fam_dir, exist_ok=True)
        n_test = max(1, int(per_family * test_fraction))
        for i in range(per_family):
            pixels = np.clip(
                value + rng.integers(-8, 9, size=(size, size, 3)), 0, 255
            ).astype(np.uint8)
            path = os.path.join(fam_dir, f"{fam}_{i:03d}.png")
            save_image(pixels, path)
            records.append({
                "sample_id": f"{fam}__{i:03d}",
                "source_path": "",
                "family": fam,
                "method": "colormap",
                "geometry": "truncated",
                "image_path": path,
                "split": "test" if i < n_test else "train",
                "generated": False,
                "flags": [],
            })
    manifest_path = os.path.join(root, "manifest.jsonl")
    write_manifest(manifest_path, records)
    return manifest_path


@pytest.fixture(scope="session")
def toy_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    return make_toy_corpus(str(root))
