"""Synthetic corpus generation: minimal PE files with family signatures.

Stands in for a real malware corpus at desk scale.  Each family gets a
distinct byte-value palette and a repeating code motif; samples share
the family signature with per-sample mutations and size jitter, so
families are separable by byte statistics while samples stay distinct.

Also provides a noise-image generator used as the baseline "fake" set
for the real-vs-fake evaluation task.
"""

import os
import struct

import numpy as np

from .encoders import MalImage, write_png

DOS_HEADER_SIZE = 64
OPTIONAL_HEADER_SIZE = 224  # PE32 with 16 data directories
FILE_ALIGN = 512
SECTION_ALIGN = 0x1000


def _align_up(value, align):
    return -(-value // align) * align


def build_minimal_pe(sections, machine=0x014C, characteristics=0x0102):
    """Assemble a parseable PE32 file from (name, payload) sections.

    Payloads are zero-padded to the 512-byte file alignment; section
    raw sizes cover the padded length, so sections tile the file with
    no gaps after the header block.
    """
    n = len(sections)
    headers_end = DOS_HEADER_SIZE + 4 + 20 + OPTIONAL_HEADER_SIZE + n * 40
    first_raw = _align_up(headers_end, FILE_ALIGN)

    dos = bytearray(DOS_HEADER_SIZE)
    dos[0:2] = b"MZ"
    struct.pack_into("<I", dos, 0x3C, DOS_HEADER_SIZE)

    coff = struct.pack("<HHIIIHH", machine, n, 0, 0, 0, OPTIONAL_HEADER_SIZE,
                       characteristics)

    opt = bytearray(OPTIONAL_HEADER_SIZE)
    struct.pack_into("<H", opt, 0, 0x10B)          # PE32 magic
    struct.pack_into("<I", opt, 16, SECTION_ALIGN)  # AddressOfEntryPoint
    struct.pack_into("<I", opt, 28, 0x400000)       # ImageBase
    struct.pack_into("<I", opt, 32, SECTION_ALIGN)
    struct.pack_into("<I", opt, 36, FILE_ALIGN)
    struct.pack_into("<H", opt, 68, 3)              # console subsystem
    struct.pack_into("<I", opt, 92, 16)             # NumberOfRvaAndSizes

    table = bytearray()
    payloads = bytearray()
    raw_offset = first_raw
    virtual_addr = SECTION_ALIGN
    for name, payload in sections:
        raw_size = _align_up(max(len(payload), 1), FILE_ALIGN)
        entry = bytearray(40)
        entry[0:8] = name.encode("latin-1")[:8].ljust(8, b"\x00")
        struct.pack_into("<I", entry, 8, len(payload))      # VirtualSize
        struct.pack_into("<I", entry, 12, virtual_addr)
        struct.pack_into("<I", entry, 16, raw_size)
        struct.pack_into("<I", entry, 20, raw_offset)
        flags = 0x60000020 if name.startswith(".text") else 0xC0000040
        struct.pack_into("<I", entry, 36, flags)
        table += entry
        payloads += bytes(payload).ljust(raw_size, b"\x00")
        raw_offset += raw_size
        virtual_addr += _align_up(max(len(payload), 1), SECTION_ALIGN)

    header_block = bytes(dos) + b"PE\x00\x00" + coff + bytes(opt) + bytes(table)
    header_block = header_block.ljust(first_raw, b"\x00")
    return header_block + bytes(payloads)


def _family_signature(seed, family_index):
    rng = np.random.default_rng([seed, family_index])
    palette = rng.choice(256, size=12, replace=False).astype(np.uint8)
    weights = rng.dirichlet(np.full(12, 0.6))
    motif = rng.integers(0, 256, size=96, dtype=np.uint8)
    return palette, weights, motif


def _make_sample(seed, family_index, sample_index, palette, weights, motif,
                 data_len_base, mutation_rate=0.02):
    rng = np.random.default_rng([seed, family_index, sample_index])
    text = np.tile(motif, -(-6144 // motif.size))[:6144].copy()
    n_mut = int(text.size * mutation_rate)
    positions = rng.choice(text.size, size=n_mut, replace=False)
    text[positions] = rng.integers(0, 256, size=n_mut, dtype=np.uint8)
    data_len = data_len_base + int(rng.integers(0, 4096))
    data = rng.choice(palette, size=data_len, p=weights).astype(np.uint8)
    return build_minimal_pe([(".text", text.tobytes()), (".data", data.tobytes())])


def make_fixture_corpus(root, n_families=10, samples_per_family=200, seed=42,
                        benign_samples=0):
    """Write a synthetic corpus of valid minimal PEs under root/<family>/.

    Returns a summary dict with the file counts written.
    """
    root = str(root)
    counts = {}
    family_specs = [(f"fam{i:02d}", i) for i in range(n_families)]
    if benign_samples:
        family_specs.append(("benign", n_families))
    for name, idx in family_specs:
        n_samples = benign_samples if name == "benign" else samples_per_family
        palette, weights, motif = _family_signature(seed, idx)
        data_len_base = 9216 + idx * 1024
        fam_dir = os.path.join(root, name)
        os.makedirs(fam_dir, exist_ok=True)
        for s in range(n_samples):
            blob = _make_sample(seed, idx, s, palette, weights, motif, data_len_base)
            with open(os.path.join(fam_dir, f"{name}_{s:04d}.exe"), "wb") as f:
                f.write(blob)
        counts[name] = n_samples
    return {"root": root, "seed": seed, "families": counts,
            "total": sum(counts.values())}


def make_noise_fakes(out_dir, count, size=128, channels=3, seed=0):
    """Uniform-noise PNGs: the weakest possible 'generated image' baseline."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        pixels = rng.integers(0, 256, size=(size, size, channels), dtype=np.uint8)
        method = "grayscale" if channels == 1 else "colormap"
        img = MalImage(size, size, channels, pixels, method, "truncated")
        path = os.path.join(out_dir, f"noise_{i:05d}.png")
        write_png(img, path)
        paths.append(path)
    return paths
