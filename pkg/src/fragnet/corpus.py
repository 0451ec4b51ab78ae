"""Block corpora: taxonomy, scenario class groupings, sampling and splits.

The 75-type taxonomy is a static table of (type name, use group) pairs;
the six classification scenarios are derived from it. Real corpora are
read from pre-blocked archives or sampled out of a directory of files;
a seeded synthetic generator provides desk-scale corpora with known
distributional differences between classes.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

Seed = Union[int, Sequence[int]]

BLOCK_SIZES = (512, 4096)
SPLIT_TAGS = ("train", "val", "test")

ARCHIVE_MAGIC = "fragnet-blocks"
ARCHIVE_VERSION = "v1"

# Use groups in scenario-2 class order; cardinalities 6/11/3/7/13/4/7/4/9/7/4.
GROUPS = ("bitmap", "raw", "vector", "video", "archive", "executable",
          "office", "published", "text", "audio", "other")

# The shipped 75-type table: (type name, use group). Scenario mappings and
# all class counts derive from this ordering; index in this tuple is the
# base label.
FILE_TYPES: tuple[tuple[str, str], ...] = (
    # bitmap photo formats (6)
    ("jpg", "bitmap"), ("png", "bitmap"), ("gif", "bitmap"),
    ("bmp", "bitmap"), ("tiff", "bitmap"), ("heic", "bitmap"),
    # RAW photo formats (11)
    ("arw", "raw"), ("cr2", "raw"), ("dng", "raw"), ("gpr", "raw"),
    ("nef", "raw"), ("nrw", "raw"), ("orf", "raw"), ("pef", "raw"),
    ("raf", "raw"), ("rw2", "raw"), ("3fr", "raw"),
    # vector graphics (3)
    ("svg", "vector"), ("ai", "vector"), ("eps", "vector"),
    # video containers (7)
    ("mov", "video"), ("mp4", "video"), ("3gp", "video"), ("avi", "video"),
    ("mkv", "video"), ("ogv", "video"), ("webm", "video"),
    # archives (13)
    ("zip", "archive"), ("gz", "archive"), ("bz2", "archive"),
    ("xz", "archive"), ("rar", "archive"), ("7z", "archive"),
    ("apk", "archive"), ("jar", "archive"), ("deb", "archive"),
    ("rpm", "archive"), ("msi", "archive"), ("dmg", "archive"),
    ("pkg", "archive"),
    # executables (4)
    ("exe", "executable"), ("dll", "executable"), ("elf", "executable"),
    ("mach-o", "executable"),
    # office documents (7)
    ("doc", "office"), ("docx", "office"), ("xls", "office"),
    ("xlsx", "office"), ("ppt", "office"), ("pptx", "office"),
    ("key", "office"),
    # rich publications (4)
    ("pdf", "published"), ("djvu", "published"), ("mobi", "published"),
    ("epub", "published"),
    # human-readable text (9)
    ("txt", "text"), ("csv", "text"), ("html", "text"), ("xml", "text"),
    ("json", "text"), ("md", "text"), ("rtf", "text"), ("tex", "text"),
    ("log", "text"),
    # audio (7)
    ("mp3", "audio"), ("wav", "audio"), ("aiff", "audio"), ("flac", "audio"),
    ("ogg", "audio"), ("m4a", "audio"), ("wma", "audio"),
    # other (4)
    ("sqlite", "other"), ("ttf", "other"), ("dwg", "other"), ("pcap", "other"),
)

N_FILE_TYPES = len(FILE_TYPES)
TYPE_NAMES = tuple(name for name, _ in FILE_TYPES)
JPEG_LABEL = TYPE_NAMES.index("jpg")

# types the camera-card JPEG carver distinguishes JPEG from: the RAW
# formats plus 3GP, MOV, MKV, TIFF and HEIC
_CAMERA_TYPES = tuple(
    i for i, (name, group) in enumerate(FILE_TYPES)
    if group == "raw" or name in ("3gp", "mov", "mkv", "tiff", "heic")
)

SCENARIO_IDS = (1, 2, 3, 4, 5, 6)
SCENARIO_CLASS_COUNTS = {1: 75, 2: 11, 3: 25, 4: 5, 5: 2, 6: 2}


@dataclass(frozen=True)
class Scenario:
    """One class grouping over the 75 base types.

    ``mapping`` sends each included base label to its class index; base
    labels absent from the mapping are excluded from the scenario.
    """

    id: int
    class_names: tuple[str, ...]
    mapping: dict[int, int]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def jpeg_class(self) -> Optional[int]:
        """Class index holding exactly the JPEG type, if there is one."""
        members: dict[int, list[int]] = {}
        for base, cls in self.mapping.items():
            members.setdefault(cls, []).append(base)
        for cls, bases in members.items():
            if bases == [JPEG_LABEL]:
                return cls
        return None


def _scenario_1() -> Scenario:
    return Scenario(1, TYPE_NAMES, {i: i for i in range(N_FILE_TYPES)})


def _scenario_2() -> Scenario:
    mapping = {i: GROUPS.index(group) for i, (_, group) in enumerate(FILE_TYPES)}
    return Scenario(2, GROUPS, mapping)


def _scenario_3() -> Scenario:
    separate = [i for i, (_, g) in enumerate(FILE_TYPES) if g in ("bitmap", "raw", "video")]
    names = tuple(TYPE_NAMES[i] for i in separate) + ("other",)
    mapping = {}
    for i in range(N_FILE_TYPES):
        mapping[i] = separate.index(i) if i in separate else len(separate)
    return Scenario(3, names, mapping)


def _scenario_4() -> Scenario:
    names = ("jpg", "raw", "video", "bitmap", "other")
    mapping = {}
    for i, (name, group) in enumerate(FILE_TYPES):
        if i == JPEG_LABEL:
            mapping[i] = 0
        elif group == "raw":
            mapping[i] = 1
        elif group == "video":
            mapping[i] = 2
        elif group == "bitmap":
            mapping[i] = 3
        else:
            mapping[i] = 4
    return Scenario(4, names, mapping)


def _scenario_5() -> Scenario:
    mapping = {i: (0 if i == JPEG_LABEL else 1) for i in range(N_FILE_TYPES)}
    return Scenario(5, ("jpg", "other"), mapping)


def _scenario_6() -> Scenario:
    mapping = {JPEG_LABEL: 0}
    for i in _CAMERA_TYPES:
        mapping[i] = 1
    return Scenario(6, ("jpg", "other"), mapping)


_SCENARIOS = {1: _scenario_1, 2: _scenario_2, 3: _scenario_3,
              4: _scenario_4, 5: _scenario_5, 6: _scenario_6}


def scenario(sid: int) -> Scenario:
    """The class grouping for scenario ``sid`` in 1..6."""
    if sid not in _SCENARIOS:
        raise ValueError(f"scenario must be in {SCENARIO_IDS}, got {sid}")
    return _SCENARIOS[sid]()


def apply_scenario(base_label: int, s: Scenario) -> Optional[int]:
    """Class index of ``base_label`` under ``s``, or None when excluded."""
    if not 0 <= base_label < N_FILE_TYPES:
        raise ValueError(f"base label {base_label} outside [0, {N_FILE_TYPES})")
    return s.mapping.get(base_label)


def extension_label(filename: str) -> Optional[int]:
    """Base label inferred from a file extension, or None if unknown."""
    ext = os.path.splitext(filename)[1].lstrip(".").lower()
    if not ext:
        return None
    try:
        return TYPE_NAMES.index(ext)
    except ValueError:
        return None


@dataclass(frozen=True)
class Block:
    """A labeled byte block of exactly the corpus block size."""

    data: bytes
    label: int


@dataclass
class Dataset:
    """Labeled blocks with a per-block train/val/test tag."""

    blocks: list[Block]
    split: np.ndarray  # array of "train" / "val" / "test" tags
    block_size: int
    seed: int

    def __post_init__(self) -> None:
        if len(self.blocks) != len(self.split):
            raise ValueError("split tags must cover every block")

    def __len__(self) -> int:
        return len(self.blocks)

    def indices(self, tag: str) -> np.ndarray:
        if tag not in SPLIT_TAGS:
            raise ValueError(f"split tag must be one of {SPLIT_TAGS}, got {tag!r}")
        return np.flatnonzero(self.split == tag)

    def part(self, tag: str) -> list[Block]:
        return [self.blocks[i] for i in self.indices(tag)]

    def labels(self) -> np.ndarray:
        return np.array([b.label for b in self.blocks], dtype=np.int64)

    def n_classes(self) -> int:
        return int(self.labels().max()) + 1


def sample_blocks(file_bytes: bytes, block_size: int, count: int, seed: Seed,
                  label: int = 0) -> list[Block]:
    """Draw ``count`` block-aligned blocks from a file, without replacement
    while possible, with replacement once the aligned blocks run out.
    Deterministic given ``seed``; per-file seeds may be sequences derived
    by hashing so parallel ingestion stays reproducible.
    """
    if len(file_bytes) < block_size:
        raise ValueError(
            f"file of {len(file_bytes)} bytes is shorter than block size {block_size}")
    n_aligned = len(file_bytes) // block_size
    rng = np.random.default_rng(seed)
    if count <= n_aligned:
        offsets = rng.choice(n_aligned, size=count, replace=False)
    else:
        offsets = rng.choice(n_aligned, size=count, replace=True)
    return [Block(file_bytes[o * block_size:(o + 1) * block_size], label)
            for o in offsets]


def split(blocks: Sequence[Block], seed: int,
          block_size: Optional[int] = None) -> Dataset:
    """Stratified shuffle into 80/10/10 train/val/test per class.

    Every class lands in every split; classes with fewer than 10 blocks
    cannot be stratified and are rejected.
    """
    if not blocks:
        raise ValueError("cannot split an empty block list")
    if block_size is None:
        block_size = len(blocks[0].data)
    labels = np.array([b.label for b in blocks])
    tags = np.empty(len(blocks), dtype="<U5")
    for label in np.unique(labels):
        idx = np.flatnonzero(labels == label)
        if len(idx) < 10:
            raise ValueError(
                f"class {label} has {len(idx)} blocks; at least 10 are needed "
                f"to stratify an 80/10/10 split")
        rng = np.random.default_rng([seed, int(label)])
        idx = rng.permutation(idx)
        n = len(idx)
        n_val = max(1, round(n * 0.1))
        n_test = max(1, round(n * 0.1))
        tags[idx[:n_val]] = "val"
        tags[idx[n_val:n_val + n_test]] = "test"
        tags[idx[n_val + n_test:]] = "train"
    return Dataset(list(blocks), tags, block_size, seed)


def map_dataset(ds: Dataset, s: Scenario) -> Dataset:
    """Relabel a base-labeled dataset through a scenario; excluded blocks
    are dropped, split tags are preserved."""
    blocks: list[Block] = []
    tags: list[str] = []
    for block, tag in zip(ds.blocks, ds.split):
        cls = apply_scenario(block.label, s)
        if cls is None:
            continue
        blocks.append(Block(block.data, cls))
        tags.append(str(tag))
    return Dataset(blocks, np.array(tags, dtype="<U5"), ds.block_size, ds.seed)


SYNTH_KINDS = ("constant", "uniform_random", "ascii_text",
               "delta_structured", "compressed_like")

_ASCII_LETTERS = np.frombuffer(b"abcdefghijklmnopqrstuvwxyz", dtype=np.uint8)


def _ascii_text_bytes(rng: np.random.Generator, size: int) -> bytes:
    out = np.empty(size + 16, dtype=np.uint8)
    pos = 0
    while pos < size:
        word_len = int(rng.integers(2, 11))
        out[pos:pos + word_len] = rng.choice(_ASCII_LETTERS, size=word_len)
        pos += word_len
        # rare newlines keep the printable-band fraction above 0.95
        out[pos] = 0x0A if rng.random() < 0.02 else 0x20
        pos += 1
    return out[:size].tobytes()


def _synth_block(kind: str, block_size: int, rng: np.random.Generator) -> bytes:
    if kind == "constant":
        return bytes([int(rng.integers(0, 256))]) * block_size
    if kind == "uniform_random":
        return rng.integers(0, 256, block_size, dtype=np.uint8).tobytes()
    if kind == "ascii_text":
        return _ascii_text_bytes(rng, block_size)
    if kind == "delta_structured":
        # sawtooth staircase over a small value window: at most 64 distinct
        # byte values regardless of block size, so entropy stays low
        start = int(rng.integers(0, 256))
        step = int(rng.integers(1, 4))
        run = int(rng.integers(4, 17))
        span = int(rng.integers(16, 65))
        ramp = (start + step * ((np.arange(block_size) // run) % span)) % 256
        return ramp.astype(np.uint8).tobytes()
    if kind == "compressed_like":
        text = _ascii_text_bytes(rng, block_size * 4)
        stream = zlib.compress(text)
        while len(stream) < block_size:
            text += _ascii_text_bytes(rng, block_size * 4)
            stream = zlib.compress(text)
        return stream[:block_size]
    raise ValueError(f"unknown generator kind {kind!r}; use one of {SYNTH_KINDS}")


def synth_corpus(spec: Sequence[tuple[str, int]], block_size: int,
                 seed: int) -> Dataset:
    """Labeled synthetic blocks, one class per (generator kind, count) entry,
    stratified-split with the same seed. Deterministic given ``seed``."""
    blocks: list[Block] = []
    for cls, (kind, count) in enumerate(spec):
        if kind not in SYNTH_KINDS:
            raise ValueError(f"unknown generator kind {kind!r}; use one of {SYNTH_KINDS}")
        for i in range(count):
            rng = np.random.default_rng([seed, cls, i])
            blocks.append(Block(_synth_block(kind, block_size, rng), cls))
    return split(blocks, seed, block_size)


def write_block_archive(path, blocks: Sequence[Block], block_size: int) -> None:
    """Pre-blocked archive: a ``fragnet-blocks v1 <block_size> <n_blocks>``
    header line, raw concatenated blocks, then little-endian 16-bit labels."""
    for i, b in enumerate(blocks):
        if len(b.data) != block_size:
            raise ValueError(f"block {i} has {len(b.data)} bytes, expected {block_size}")
        if not 0 <= b.label < 65536:
            raise ValueError(f"block {i} label {b.label} does not fit in 16 bits")
    with open(path, "wb") as fh:
        fh.write(f"{ARCHIVE_MAGIC} {ARCHIVE_VERSION} {block_size} {len(blocks)}\n"
                 .encode("ascii"))
        for b in blocks:
            fh.write(b.data)
        fh.write(struct.pack(f"<{len(blocks)}H", *(b.label for b in blocks)))


def read_block_archive(path) -> tuple[int, list[Block]]:
    """Read a ``fragnet-blocks v1`` archive; returns (block_size, blocks)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if len(parts) != 4 or parts[0] != ARCHIVE_MAGIC or parts[1] != ARCHIVE_VERSION:
            raise ValueError(f"not a {ARCHIVE_MAGIC} {ARCHIVE_VERSION} archive: {path}")
        block_size, n_blocks = int(parts[2]), int(parts[3])
        payload = fh.read(block_size * n_blocks)
        if len(payload) != block_size * n_blocks:
            raise ValueError(f"archive truncated: expected {block_size * n_blocks} "
                             f"block bytes, found {len(payload)}")
        label_bytes = fh.read(2 * n_blocks)
        if len(label_bytes) != 2 * n_blocks:
            raise ValueError("archive truncated: label array incomplete")
        labels = struct.unpack(f"<{n_blocks}H", label_bytes)
    blocks = [Block(payload[i * block_size:(i + 1) * block_size], labels[i])
              for i in range(n_blocks)]
    return block_size, blocks


def ingest_directory(root, block_size: int, blocks_per_file: int,
                     seed: int) -> list[Block]:
    """Sample blocks from every file under ``root`` whose extension maps to
    the taxonomy; labels come from the extension. Files shorter than one
    block or with unknown extensions are skipped."""
    blocks: list[Block] = []
    for dirpath, _, filenames in sorted(os.walk(root)):
        for name in sorted(filenames):
            label = extension_label(name)
            if label is None:
                continue
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                data = fh.read()
            if len(data) < block_size:
                continue
            file_seed = zlib.crc32(os.path.relpath(path, root).encode()) & 0xFFFFFFFF
            blocks.extend(sample_blocks(data, block_size, blocks_per_file,
                                        [seed, file_seed], label=label))
    return blocks
