import pytest
from hypothesis import given, strategies as st

from malvis.errors import EmptyFileError
from malvis.ingest import KB, bin_width, layout_grid, truncate_pad

# hand-transcribed width lookup: (size upper bound in KB, width)
WIDTH_TABLE = [
    (10, 32),
    (30, 64),
    (60, 128),
    (100, 256),
    (200, 384),
    (500, 512),
    (1000, 768),
]


def test_bin_width_paper_examples():
    assert bin_width(5 * KB) == 32
    assert bin_width(50 * KB) == 128
    assert bin_width(2_048_000) == 1024


def test_bin_width_all_bins_and_boundaries():
    lo = 0
    for hi_kb, width in WIDTH_TABLE:
        hi = hi_kb * KB
        assert bin_width(lo + 1) == width
        assert bin_width(hi) == width
        assert bin_width(hi - 1) == width
        lo = hi
    assert bin_width(1000 * KB + 1) == 1024
    assert bin_width(10**9) == 1024


def test_bin_width_boundary_flip():
    # exactly at a bin edge stays in the lower bin; one byte more moves up
    assert bin_width(10 * KB) == 32
    assert bin_width(10 * KB + 1) == 64


def test_bin_width_empty_file():
    with pytest.raises(EmptyFileError):
        bin_width(0)


@given(st.integers(min_value=1, max_value=2 * 10**6), st.integers(min_value=0, max_value=10**5))
def test_bin_width_monotone(a, delta):
    assert bin_width(a + delta) >= bin_width(a)


def test_truncate_pad_long_input():
    data = bytes(range(256)) * 100  # 25,600 bytes
    out = truncate_pad(data, 16384)
    assert out == data[:16384]


def test_truncate_pad_zero_fill():
    out = truncate_pad(bytes(range(10)), 16)
    assert out == bytes(range(10)) + b"\x00" * 6


def test_truncate_pad_identity():
    data = bytes(range(128)) * 128
    assert truncate_pad(data, len(data)) == data


def test_truncate_pad_empty_input():
    assert truncate_pad(b"", 4) == b"\x00" * 4


@given(st.binary(max_size=400), st.integers(min_value=1, max_value=300))
def test_truncate_pad_idempotent(data, target):
    once = truncate_pad(data, target)
    assert truncate_pad(once, target) == once
    assert len(once) == target


def test_layout_grid_exact_fit():
    grid = layout_grid(bytes(range(8)), 4)
    assert (grid.width, grid.height) == (4, 2)
    assert grid.data == bytes(range(8))


def test_layout_grid_pads_last_row():
    grid = layout_grid(bytes(range(1, 10)), 4)
    assert (grid.width, grid.height) == (4, 3)
    assert grid.data[-4:] == bytes([9, 0, 0, 0])


def test_layout_grid_square():
    grid = layout_grid(b"\xab" * 16384, 128)
    assert (grid.width, grid.height) == (128, 128)


def test_layout_grid_empty():
    with pytest.raises(EmptyFileError):
        layout_grid(b"", 16)


@given(st.binary(min_size=1, max_size=500), st.integers(min_value=1, max_value=64))
def test_layout_grid_roundtrip(data, width):
    grid = layout_grid(data, width)
    assert grid.data[: len(data)] == data
    assert set(grid.data[len(data):]) <= {0}
    assert len(grid.data) == grid.width * grid.height
