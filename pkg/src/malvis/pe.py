"""Minimal PE parser: section table plus per-section Shannon entropy.

Only the fields the PE image encoder needs are read: section name,
PointerToRawData and SizeOfRawData, walked from the MZ stub through the
COFF header.  Imports, exports and resources are ignored.

Bytes before the first section are modeled as a pseudo-section named
"HEADER"; gaps between sections and trailing overlay data get pseudo-
sections too, so every byte of the file belongs to exactly one region.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import NotPEError, TruncatedHeaderError, UndefinedEntropyError

PE_OFFSET_FIELD = 0x3C
COFF_HEADER_SIZE = 20
SECTION_ENTRY_SIZE = 40


def shannon_entropy(data):
    """Shannon entropy of the byte-value distribution, in bits (0..8)."""
    if len(data) == 0:
        raise UndefinedEntropyError("entropy of an empty sequence is undefined")
    counts = np.bincount(np.frombuffer(bytes(data), dtype=np.uint8), minlength=256)
    probs = counts[counts > 0] / len(data)
    return float(-np.sum(probs * np.log2(probs))) + 0.0


@dataclass
class PESection:
    """One region of the file: a real section or a pseudo-section."""

    name: str
    raw_offset: int
    raw_size: int
    entropy_bits: float
    clamped: bool = False
    pseudo: bool = False

    @property
    def end(self):
        return self.raw_offset + self.raw_size


@dataclass
class PEFileInfo:
    """Parsed section table plus a full partition of the file into regions."""

    file_size: int
    sections: list
    header_region: PESection
    regions: list = field(default_factory=list)
    parse_ok: bool = True

    @property
    def clamped(self):
        return any(s.clamped for s in self.sections)


def _region_entropy(data, offset, size):
    if size == 0:
        return 0.0
    return shannon_entropy(data[offset : offset + size])


def _read_sections(data, e_lfanew):
    n_sections = struct.unpack_from("<H", data, e_lfanew + 6)[0]
    opt_size = struct.unpack_from("<H", data, e_lfanew + 20)[0]
    table_start = e_lfanew + 4 + COFF_HEADER_SIZE + opt_size
    table_end = table_start + n_sections * SECTION_ENTRY_SIZE
    if table_end > len(data):
        raise TruncatedHeaderError("section table extends past end of file")

    entries = []
    for i in range(n_sections):
        off = table_start + i * SECTION_ENTRY_SIZE
        name = data[off : off + 8].rstrip(b"\x00").decode("latin-1")
        raw_size = struct.unpack_from("<I", data, off + 16)[0]
        raw_offset = struct.unpack_from("<I", data, off + 20)[0]
        if raw_size == 0 or raw_offset == 0:
            # uninitialized-data sections occupy no file bytes
            continue
        entries.append((name, raw_offset, raw_size))
    return entries


def parse_pe(data):
    """Parse the section table of a PE file.

    Raises NotPEError when the MZ or PE signatures are missing and
    TruncatedHeaderError when headers point past the end of the file.
    Sections reaching past the end of the file (or into a neighbor)
    are clamped and flagged rather than rejected.
    """
    data = bytes(data)
    size = len(data)
    if size < 2 or data[:2] != b"MZ":
        raise NotPEError("missing MZ signature")
    if size < 64:
        raise TruncatedHeaderError("file too small for a DOS header")
    e_lfanew = struct.unpack_from("<I", data, PE_OFFSET_FIELD)[0]
    if e_lfanew + 4 + COFF_HEADER_SIZE + 2 > size:
        raise TruncatedHeaderError("PE header offset beyond end of file")
    if data[e_lfanew : e_lfanew + 4] != b"PE\x00\x00":
        raise NotPEError("missing PE signature")

    entries = sorted(_read_sections(data, e_lfanew), key=lambda e: e[1])

    sections = []
    for i, (name, raw_offset, raw_size) in enumerate(entries):
        clamped = False
        if raw_offset >= size:
            continue
        limit = size
        if i + 1 < len(entries):
            limit = min(limit, entries[i + 1][1])
        if raw_offset + raw_size > limit:
            raw_size = limit - raw_offset
            clamped = True
        if raw_size <= 0:
            continue
        sections.append(
            PESection(
                name=name,
                raw_offset=raw_offset,
                raw_size=raw_size,
                entropy_bits=_region_entropy(data, raw_offset, raw_size),
                clamped=clamped,
            )
        )

    first_offset = sections[0].raw_offset if sections else size
    header_region = PESection(
        name="HEADER",
        raw_offset=0,
        raw_size=first_offset,
        entropy_bits=_region_entropy(data, 0, first_offset),
        pseudo=True,
    )

    regions = [header_region] if header_region.raw_size > 0 else []
    pos = header_region.raw_size
    for sec in sections:
        if sec.raw_offset > pos:
            regions.append(
                PESection(
                    name="GAP",
                    raw_offset=pos,
                    raw_size=sec.raw_offset - pos,
                    entropy_bits=_region_entropy(data, pos, sec.raw_offset - pos),
                    pseudo=True,
                )
            )
        regions.append(sec)
        pos = sec.end
    if pos < size:
        regions.append(
            PESection(
                name="OVERLAY",
                raw_offset=pos,
                raw_size=size - pos,
                entropy_bits=_region_entropy(data, pos, size - pos),
                pseudo=True,
            )
        )

    return PEFileInfo(
        file_size=size,
        sections=sections,
        header_region=header_region,
        regions=regions,
    )


def parse_pe_or_fallback(data):
    """parse_pe, falling back to one whole-file pseudo-section on failure.

    The fallback keeps the PE encoder total over arbitrary inputs; callers
    can tell from parse_ok that the file should be flagged.
    """
    try:
        return parse_pe(data)
    except (NotPEError, TruncatedHeaderError):
        whole = PESection(
            name="RAW",
            raw_offset=0,
            raw_size=len(data),
            entropy_bits=_region_entropy(bytes(data), 0, len(data)),
            pseudo=True,
        )
        return PEFileInfo(
            file_size=len(data),
            sections=[],
            header_region=whole,
            regions=[whole] if whole.raw_size else [],
            parse_ok=False,
        )
