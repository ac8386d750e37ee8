"""Materialize images from scanned binaries: one PNG per (file, method).

Truncated geometry takes the first width*height pixels' worth of bytes
(one byte per pixel for grayscale/colormap/pe, three for 3-gram) and
zero-pads short files.  Resized geometry lays the whole file out at the
file-size-dependent width and rescales to the target with nearest
neighbor.  PE images always compute entropy and size ratios from the
full file, so truncation never distorts the per-section statistics.

Workers only parallelize independent files; outputs are byte-identical
for any worker count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .dataset import DatasetManifest, ManifestRecord, now_stamp
from .encoders import (
    MalImage,
    encode_3gram,
    encode_colormap,
    encode_grayscale,
    encode_pe,
    plasma_colormap,
    resize,
    write_png,
)
from .errors import EmptyFileError, MalvisError
from .ingest import bin_width, layout_grid, truncate_pad
from .pe import parse_pe_or_fallback

BYTES_PER_PIXEL = {"grayscale": 1, "colormap": 1, "threegram": 3, "pe": 1}


def _pad_rows(img, target_h):
    """Crop or zero-pad an image to exactly target_h rows."""
    if img.height == target_h:
        return img
    pixels = np.zeros((target_h, img.width, img.channels), dtype=np.uint8)
    h = min(target_h, img.height)
    pixels[:h] = img.pixels[:h]
    return MalImage(img.width, target_h, img.channels, pixels, img.method, img.geometry)


def encode_record(data, method, geometry, size, cmap=None):
    """Encode one file's bytes into a size x size image.

    Returns (MalImage, flags); flags record the PE-parse fallback.
    """
    if len(data) == 0:
        raise EmptyFileError("empty file")
    flags = []
    if method == "pe":
        info = parse_pe_or_fallback(data)
        if not info.parse_ok:
            flags.append("pe-fallback")
        if info.clamped:
            flags.append("pe-section-clamped")
        if geometry == "truncated":
            img = _pad_rows(encode_pe(info, data, width=size, geometry="truncated"), size)
        else:
            img = resize(encode_pe(info, data, width=bin_width(len(data))), size, size)
        return img, flags

    if geometry == "truncated":
        window = truncate_pad(data, size * size * BYTES_PER_PIXEL[method])
        if method == "grayscale":
            img = encode_grayscale(layout_grid(window, size))
        elif method == "colormap":
            img = encode_colormap(window, cmap=cmap, width=size)
        else:
            img = encode_3gram(window, width=size)
        return img, flags

    width = bin_width(len(data))
    if method == "grayscale":
        img = encode_grayscale(layout_grid(data, width), geometry="resized")
    elif method == "colormap":
        img = encode_colormap(data, cmap=cmap, width=width, geometry="resized")
    else:
        img = encode_3gram(data, width=width, geometry="resized")
    return resize(img, size, size), flags


def sample_id_for(root, path):
    rel = os.path.relpath(path, root)
    stem = os.path.splitext(rel)[0]
    return stem.replace(os.sep, "__")


def extract_to_dir(records, out_dir, method, geometry, size, seed=0, workers=1,
                   corpus_root=None, cmap=None):
    """Encode every record to out_dir/images and build the manifest.

    Returns (manifest, errors) where errors lists (path, message) for
    files that could not be encoded; those appear in the manifest with
    an error flag and no image.
    """
    images_dir = os.path.join(out_dir, "images")
    os.makedirs(images_dir, exist_ok=True)
    if cmap is None:
        cmap = plasma_colormap()
    root = corpus_root
    if root is None:
        root = os.path.commonpath([os.path.dirname(r.path) for r in records]) if records else ""

    def work(record):
        sid = sample_id_for(root, record.path)
        flags = list(record.flags)
        image_path = ""
        error = None
        try:
            img, enc_flags = encode_record(record.data, method, geometry, size, cmap)
            flags.extend(enc_flags)
            image_path = os.path.join(images_dir, sid + ".png")
            write_png(img, image_path)
        except MalvisError as exc:
            error = (record.path, str(exc))
            flags.append(f"encode-error: {exc}")
        rec = ManifestRecord(sample_id=sid, source_path=record.path, family=record.family,
                             method=method, geometry=geometry, image_path=image_path,
                             flags=flags)
        return rec, error

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, records))
    else:
        results = [work(r) for r in records]

    manifest = DatasetManifest(
        records=[rec for rec, _ in results],
        seed=seed,
        created_at=now_stamp(),
        encoder_config={"method": method, "geometry": geometry, "size": size,
                        "seed": seed},
    )
    errors = [err for _, err in results if err is not None]
    return manifest, errors
