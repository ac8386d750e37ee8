"""Generate fake-image corpora consumable by the main pipeline."""

import os

import numpy as np
import torch

from .io import save_image, write_manifest


def _to_pixels(batch):
    # NCHW [-1,1] -> NHWC uint8
    arr = batch.detach().numpy().transpose(0, 2, 3, 1)
    return np.clip((arr + 1.0) * 127.5 + 0.5, 0, 255).astype(np.uint8)


def generate_fakes(generator, per_family_counts, out_dir, method="colormap",
                   geometry="truncated", seed=0, batch_size=32):
    """Sample the generator into out_dir/<family>/ plus a manifest.

    per_family_counts maps family name -> count.  Class-conditional
    generators (AC-GAN) receive the family's class index (sorted family
    order); unconditional ones (DC-GAN) ignore it.  Manifest rows carry
    "generated": true so downstream tooling can tell fakes from reals.
    """
    torch.manual_seed(seed)
    generator.eval()
    conditional = hasattr(generator, "label_embedding")
    noise_dim = generator.spec.noise_dim if hasattr(generator, "spec") else \
        generator.project.in_features
    families = sorted(per_family_counts)
    records = []
    with torch.no_grad():
        for class_idx, family in enumerate(families):
            fam_dir = os.path.join(out_dir, family)
            os.makedirs(fam_dir, exist_ok=True)
            remaining = per_family_counts[family]
            made = 0
            while remaining > 0:
                b = min(batch_size, remaining)
                noise = torch.randn(b, noise_dim)
                if conditional:
                    labels = torch.full((b,), class_idx, dtype=torch.long)
                    batch = generator(noise, labels)
                else:
                    batch = generator(noise)
                for pixels in _to_pixels(batch):
                    path = os.path.join(fam_dir, f"fake_{made:05d}.png")
                    save_image(pixels, path)
                    records.append({
                        "sample_id": f"{family}__fake_{made:05d}",
                        "source_path": "",
                        "family": family,
                        "method": method,
                        "geometry": geometry,
                        "image_path": path,
                        "split": "",
                        "generated": True,
                        "flags": ["generated"],
                    })
                    made += 1
                remaining -= b
    write_manifest(os.path.join(out_dir, "manifest.jsonl"), records)
    return records
