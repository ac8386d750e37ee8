import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from malvis.encoders import (
    ColorMap256,
    MalImage,
    encode_3gram,
    encode_colormap,
    encode_grayscale,
    encode_pe,
    plasma_colormap,
    read_png,
    resize,
    write_png,
)
from malvis.errors import EmptyFileError
from malvis.fixture import build_minimal_pe
from malvis.ingest import layout_grid
from malvis.pe import parse_pe, parse_pe_or_fallback, shannon_entropy


def test_grayscale_identity_mapping():
    grid = layout_grid(bytes([0, 255, 16, 32]), 2)
    img = encode_grayscale(grid)
    assert img.channels == 1
    assert img.pixels[0, 0, 0] == 0
    assert img.pixels[0, 1, 0] == 255
    assert img.pixels[1, 0, 0] == 16
    assert img.pixels[1, 1, 0] == 32


def test_grayscale_square_from_truncation():
    img = encode_grayscale(layout_grid(b"\x7f" * 16384, 128))
    assert (img.width, img.height) == (128, 128)


def test_grayscale_all_zero():
    img = encode_grayscale(layout_grid(b"\x00" * 64, 8))
    assert not img.pixels.any()


@given(st.binary(min_size=1, max_size=2000), st.integers(min_value=1, max_value=64))
def test_grayscale_roundtrip(data, width):
    grid = layout_grid(data, width)
    img = encode_grayscale(grid)
    assert img.flat().tobytes() == grid.data
    assert img.flat().tobytes()[: len(data)] == data


def test_colormap_nibble_indexing_is_byte_indexing():
    # high nibble = row, low nibble = column of the 16x16 table: row*16+col = byte
    assert 0xA * 16 + 0xB == 0xAB == 171
    cmap = plasma_colormap()
    img = encode_colormap(bytes([0xAB]), width=1)
    assert tuple(img.pixels[0, 0]) == cmap[171]


def test_colormap_reference_endpoints():
    # frozen from the bundled 256-entry plasma table
    cmap = plasma_colormap()
    assert cmap[0] == (13, 8, 135)
    assert cmap[255] == (240, 249, 33)
    img = encode_colormap(bytes([0x00, 0xFF]), width=2)
    assert tuple(img.pixels[0, 0]) == (13, 8, 135)
    assert tuple(img.pixels[0, 1]) == (240, 249, 33)


def test_colormap_all_byte_values():
    cmap = plasma_colormap()
    img = encode_colormap(bytes(range(256)), width=16)
    for b in range(256):
        assert tuple(img.pixels[b // 16, b % 16]) == cmap[b]


def test_colormap_pad_maps_entry_zero():
    cmap = plasma_colormap()
    img = encode_colormap(bytes([5, 6, 7]), width=2)
    assert tuple(img.pixels[1, 1]) == cmap[0]


@given(st.binary(min_size=1, max_size=600), st.randoms())
def test_colormap_position_independent(data, rnd):
    perm = list(range(len(data)))
    rnd.shuffle(perm)
    img = encode_colormap(data, width=len(data))
    shuffled = encode_colormap(bytes(data[i] for i in perm), width=len(data))
    for new_pos, old_pos in enumerate(perm):
        assert (shuffled.pixels[0, new_pos] == img.pixels[0, old_pos]).all()


def test_3gram_formula_corners():
    img = encode_3gram(bytes([0, 0, 0, 255, 255, 255]), width=2)
    assert tuple(img.pixels[0, 0]) == (0, 0, 255)
    assert tuple(img.pixels[0, 1]) == (255, 255, 0)


def test_3gram_padding_rule():
    img = encode_3gram(bytes([1, 2, 3, 4, 5, 6, 7]), width=3)
    assert (img.width, img.height) == (3, 1)
    assert tuple(img.pixels[0, 2]) == (7, 0, 255)


@given(st.binary(min_size=1, max_size=900))
def test_3gram_blue_inversion(data):
    img = encode_3gram(data, width=8)
    flat = img.pixels.reshape(-1, 3)
    padded = np.zeros(flat.shape[0] * 3, dtype=np.uint8)
    padded[: len(data)] = np.frombuffer(data, dtype=np.uint8)
    triples = padded.reshape(-1, 3)
    assert (flat[:, 0] == triples[:, 0]).all()
    assert (flat[:, 1] == triples[:, 1]).all()
    assert (flat[:, 2] == 255 - triples[:, 2]).all()


def _pe_fixture(payloads):
    blob = build_minimal_pe(payloads)
    return parse_pe(blob), blob


def test_pe_zero_section():
    info, blob = _pe_fixture([(".text", b"\x00" * 512)])
    img = encode_pe(info, blob, width=32)
    sec = info.sections[0]
    rows = img.pixels.reshape(-1, 3)[sec.raw_offset : sec.raw_offset + sec.raw_size]
    assert (rows[:, 0] == 0).all()
    assert (rows[:, 1] == 0).all()


def test_pe_max_entropy_section():
    info, blob = _pe_fixture([(".data", bytes(range(256)) * 2)])
    sec = info.sections[0]
    assert sec.entropy_bits == 8.0
    img = encode_pe(info, blob, width=32)
    rows = img.pixels.reshape(-1, 3)[sec.raw_offset : sec.raw_offset + sec.raw_size]
    assert (rows[:, 0] == 255).all()


def test_pe_half_file_section_blue():
    # section raw_size = file_size / 2 -> B = round(127.5) = 128 (half up)
    info, blob = _pe_fixture([(".a", b"\xaa" * 1536), (".b", b"\xbb" * 1024)])
    assert info.file_size == 512 + 1536 + 1024  # header + a + b
    half = [s for s in info.sections if s.raw_size * 2 == info.file_size]
    assert half, "fixture should contain a half-file section"
    img = encode_pe(info, blob, width=64)
    flat = img.pixels.reshape(-1, 3)
    sec = half[0]
    assert (flat[sec.raw_offset : sec.end, 2] == 128).all()


def test_pe_r_and_b_constant_within_sections():
    rng = np.random.default_rng(3)
    payloads = [(".s%d" % i, rng.integers(0, 256, size=int(rng.integers(200, 900)),
                                          dtype=np.uint8).tobytes()) for i in range(3)]
    info, blob = _pe_fixture(payloads)
    img = encode_pe(info, blob)
    flat = img.pixels.reshape(-1, 3)
    for region in info.regions:
        seg = flat[region.raw_offset : region.end]
        assert len(set(seg[:, 0].tolist())) == 1
        assert len(set(seg[:, 2].tolist())) == 1
        expected_r = int(np.floor(region.entropy_bits * 255 / 8 + 0.5))
        assert seg[0, 0] == expected_r
        assert (seg[:, 1] == np.frombuffer(blob[region.raw_offset:region.end],
                                           dtype=np.uint8)).all()


def test_pe_fallback_whole_file():
    data = b"plain old data " * 50
    info = parse_pe_or_fallback(data)
    img = encode_pe(info, data, width=16)
    flat = img.pixels.reshape(-1, 3)[: len(data)]
    expected_r = int(np.floor(shannon_entropy(data) * 255 / 8 + 0.5))
    assert (flat[:, 0] == expected_r).all()
    assert (flat[:, 2] == 255).all()


def _resize_oracle(pixels, out_w, out_h):
    """Independent scalar implementation of floor-scaled nearest neighbor."""
    src_h, src_w, c = pixels.shape
    out = np.zeros((out_h, out_w, c), dtype=np.uint8)
    for i in range(out_h):
        for j in range(out_w):
            out[i, j] = pixels[i * src_h // out_h, j * src_w // out_w]
    return out


def test_resize_identity():
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(128, 128, 1), dtype=np.uint8)
    img = MalImage(128, 128, 1, pixels, "grayscale", "truncated")
    out = resize(img, 128, 128)
    assert (out.pixels == pixels).all()


def test_resize_integer_upscale():
    pixels = np.array([[[1], [2]], [[3], [4]]], dtype=np.uint8)
    img = MalImage(2, 2, 1, pixels, "grayscale", "truncated")
    out = resize(img, 4, 4)
    for i in range(4):
        for j in range(4):
            assert out.pixels[i, j, 0] == pixels[i // 2, j // 2, 0]


def test_resize_downscale_matches_oracle():
    rng = np.random.default_rng(1)
    pixels = rng.integers(0, 256, size=(384, 384, 3), dtype=np.uint8)
    img = MalImage(384, 384, 3, pixels, "colormap", "truncated")
    out = resize(img, 128, 128)
    assert (out.pixels == _resize_oracle(pixels, 128, 128)).all()
    # 384 -> 128 is exactly 3x: pixel(i, j) = source(3i, 3j)
    assert (out.pixels == pixels[::3, ::3]).all()


@settings(max_examples=25)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 40), st.integers(1, 40),
       st.integers(0, 2**32 - 1))
def test_resize_matches_oracle_fuzz(w, h, ow, oh, seed):
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    img = MalImage(w, h, 3, pixels, "colormap", "truncated")
    out = resize(img, ow, oh)
    assert (out.pixels == _resize_oracle(pixels, ow, oh)).all()


def test_empty_input_rejected():
    with pytest.raises(EmptyFileError):
        encode_colormap(b"", width=4)
    with pytest.raises(EmptyFileError):
        encode_3gram(b"", width=4)


def test_png_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    for channels, method in ((1, "grayscale"), (3, "colormap")):
        pixels = rng.integers(0, 256, size=(32, 16, channels), dtype=np.uint8)
        img = MalImage(16, 32, channels, pixels, method, "truncated")
        path = tmp_path / f"img{channels}.png"
        write_png(img, path)
        back = read_png(path, method=method)
        assert (back.pixels == pixels).all()


def test_png_deterministic(tmp_path):
    pixels = np.arange(64, dtype=np.uint8).reshape(8, 8, 1)
    img = MalImage(8, 8, 1, pixels, "grayscale", "truncated")
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    write_png(img, a)
    write_png(img, b)
    assert a.read_bytes() == b.read_bytes()
