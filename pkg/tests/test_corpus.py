import collections

import numpy as np
import pytest

from fragnet import corpus as cp
from fragnet import features as ft


class TestTaxonomy:
    def test_seventy_five_types(self):
        assert cp.N_FILE_TYPES == 75
        assert len(set(cp.TYPE_NAMES)) == 75

    def test_group_cardinalities(self):
        sizes = collections.Counter(group for _, group in cp.FILE_TYPES)
        assert sizes == {"bitmap": 6, "raw": 11, "vector": 3, "video": 7,
                         "archive": 13, "executable": 4, "office": 7,
                         "published": 4, "text": 9, "audio": 7, "other": 4}

    def test_extension_label(self):
        assert cp.extension_label("photo.JPG") == cp.JPEG_LABEL
        assert cp.extension_label("notes.txt") == cp.TYPE_NAMES.index("txt")
        assert cp.extension_label("weird.zzz") is None
        assert cp.extension_label("noext") is None


class TestScenarios:
    def test_class_counts(self):
        for sid, count in cp.SCENARIO_CLASS_COUNTS.items():
            assert cp.scenario(sid).n_classes == count

    def test_scenario_1_identity(self):
        s = cp.scenario(1)
        for i in range(75):
            assert cp.apply_scenario(i, s) == i

    def test_scenario_2_group_sizes(self):
        s = cp.scenario(2)
        per_class = collections.Counter(s.mapping.values())
        assert [per_class[i] for i in range(11)] == [6, 11, 3, 7, 13, 4, 7, 4, 9, 7, 4]

    def test_scenario_3_composition(self):
        s = cp.scenario(3)
        per_class = collections.Counter(s.mapping.values())
        assert sum(per_class.values()) == 75
        # 24 singleton classes (bitmap + raw + video), 51 types in "other"
        assert sorted(per_class.values()) == [1] * 24 + [51]
        assert s.class_names[-1] == "other"

    def test_scenario_4_composition(self):
        s = cp.scenario(4)
        per_class = collections.Counter(s.mapping.values())
        assert [per_class[i] for i in range(5)] == [1, 11, 7, 5, 51]
        raw_label = cp.TYPE_NAMES.index("nef")
        assert cp.apply_scenario(raw_label, s) == 1

    def test_scenario_5_jpeg_vs_rest(self):
        s = cp.scenario(5)
        assert cp.apply_scenario(cp.JPEG_LABEL, s) == 0
        others = [cp.apply_scenario(i, s) for i in range(75) if i != cp.JPEG_LABEL]
        assert set(others) == {1}
        assert len(others) == 74

    def test_scenario_6_covers_17_types(self):
        s = cp.scenario(6)
        assert len(s.mapping) == 17
        assert cp.apply_scenario(cp.JPEG_LABEL, s) == 0
        for name in ("3gp", "mov", "mkv", "tiff", "heic", "nef", "gpr"):
            assert cp.apply_scenario(cp.TYPE_NAMES.index(name), s) == 1
        for name in ("png", "pdf", "zip", "txt", "mp3", "mp4"):
            assert cp.apply_scenario(cp.TYPE_NAMES.index(name), s) is None

    def test_jpeg_class_detection(self):
        assert cp.scenario(1).jpeg_class() == cp.JPEG_LABEL
        assert cp.scenario(2).jpeg_class() is None  # grouped with bitmaps
        assert cp.scenario(3).jpeg_class() == 0
        assert cp.scenario(4).jpeg_class() == 0
        assert cp.scenario(5).jpeg_class() == 0
        assert cp.scenario(6).jpeg_class() == 0

    def test_invalid_ids(self):
        with pytest.raises(ValueError):
            cp.scenario(7)
        with pytest.raises(ValueError):
            cp.apply_scenario(75, cp.scenario(1))


class TestSampleBlocks:
    def test_whole_file_single_block(self):
        data = bytes(range(256)) * 2
        out = cp.sample_blocks(data, 512, 1, seed=0)
        assert len(out) == 1
        assert out[0].data == data

    def test_exhaustive_aligned_blocks(self):
        data = b"".join(bytes([i]) * 512 for i in range(8))
        out = cp.sample_blocks(data, 512, 8, seed=3)
        assert len(out) == 8
        assert {b.data[0] for b in out} == set(range(8))  # each block once

    def test_oversampling_with_replacement(self):
        data = bytes(1024)
        out = cp.sample_blocks(data, 512, 10, seed=1)
        assert len(out) == 10

    def test_requested_totals_honored(self):
        files = [np.random.default_rng(s).integers(0, 256, 4096, dtype=np.uint8).tobytes()
                 for s in range(5)]
        total = sum(len(cp.sample_blocks(f, 512, 20, seed=s)) for s, f in enumerate(files))
        assert total == 100

    def test_short_file_rejected(self):
        with pytest.raises(ValueError):
            cp.sample_blocks(bytes(100), 512, 1, seed=0)

    def test_deterministic(self):
        data = np.random.default_rng(7).integers(0, 256, 8192, dtype=np.uint8).tobytes()
        a = cp.sample_blocks(data, 512, 5, seed=11)
        b = cp.sample_blocks(data, 512, 5, seed=11)
        assert [x.data for x in a] == [y.data for y in b]

    def test_label_attached(self):
        out = cp.sample_blocks(bytes(512), 512, 1, seed=0, label=42)
        assert out[0].label == 42


class TestSplit:
    def _blocks(self, counts):
        blocks = []
        for label, n in counts.items():
            blocks += [cp.Block(bytes([label]) * 64, label) for _ in range(n)]
        return blocks

    def test_exact_80_10_10(self):
        ds = cp.split(self._blocks({0: 100}), seed=0)
        assert len(ds.indices("train")) == 80
        assert len(ds.indices("val")) == 10
        assert len(ds.indices("test")) == 10

    def test_every_class_in_every_split(self):
        ds = cp.split(self._blocks({0: 1000, 1: 1000}), seed=0)
        for tag in cp.SPLIT_TAGS:
            labels = {b.label for b in ds.part(tag)}
            assert labels == {0, 1}
        assert len(ds.indices("train")) == 1600

    def test_partition(self):
        ds = cp.split(self._blocks({0: 37, 1: 53}), seed=2)
        total = sum(len(ds.indices(tag)) for tag in cp.SPLIT_TAGS)
        assert total == 90

    def test_same_seed_same_assignment(self):
        blocks = self._blocks({0: 50, 1: 50})
        a = cp.split(blocks, seed=5)
        b = cp.split(blocks, seed=5)
        assert (a.split == b.split).all()

    def test_small_class_rejected(self):
        with pytest.raises(ValueError):
            cp.split(self._blocks({0: 9}), seed=0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            cp.split([], seed=0)


class TestMapDataset:
    def test_scenario_relabel_and_exclusion(self):
        blocks = ([cp.Block(b"a" * 64, cp.JPEG_LABEL)] * 20
                  + [cp.Block(b"b" * 64, cp.TYPE_NAMES.index("nef"))] * 20
                  + [cp.Block(b"c" * 64, cp.TYPE_NAMES.index("pdf"))] * 20)
        ds = cp.split(blocks, seed=0)
        mapped = cp.map_dataset(ds, cp.scenario(6))
        assert len(mapped) == 40  # pdf excluded
        assert set(b.label for b in mapped.blocks) == {0, 1}


class TestSynthCorpus:
    def test_constant_blocks_zero_entropy(self):
        ds = cp.synth_corpus([("constant", 12)], 512, seed=0)
        assert all(ft.shannon_entropy(b.data) == 0.0 for b in ds.blocks)

    def test_uniform_random_high_entropy(self):
        ds = cp.synth_corpus([("uniform_random", 12)], 4096, seed=0)
        assert all(ft.shannon_entropy(b.data) >= 7.9 for b in ds.blocks)

    def test_ascii_text_printable_band(self):
        ds = cp.synth_corpus([("ascii_text", 12)], 512, seed=0)
        for b in ds.blocks:
            assert ft.ascii_freqs(b.data)[1] > 0.95

    @pytest.mark.parametrize("size", (512, 4096))
    def test_delta_structured_low_entropy(self, size):
        ds = cp.synth_corpus([("delta_structured", 12)], size, seed=0)
        for b in ds.blocks:
            e = ft.shannon_entropy(b.data)
            assert 0.0 < e <= 6.0  # sawtooth covers at most 64 byte values

    def test_compressed_like_high_entropy(self):
        ds = cp.synth_corpus([("compressed_like", 12)], 512, seed=0)
        for b in ds.blocks:
            assert ft.shannon_entropy(b.data) > 6.0

    def test_block_sizes_and_labels(self):
        spec = [("constant", 10), ("uniform_random", 14)]
        ds = cp.synth_corpus(spec, 512, seed=3)
        assert len(ds) == 24
        assert all(len(b.data) == 512 for b in ds.blocks)
        counts = collections.Counter(b.label for b in ds.blocks)
        assert counts == {0: 10, 1: 14}

    def test_deterministic(self):
        a = cp.synth_corpus([("ascii_text", 10)], 512, seed=9)
        b = cp.synth_corpus([("ascii_text", 10)], 512, seed=9)
        assert all(x.data == y.data for x, y in zip(a.blocks, b.blocks))
        assert (a.split == b.split).all()

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            cp.synth_corpus([("noise", 10)], 512, seed=0)


class TestBlockArchive:
    def test_roundtrip(self, tmp_path):
        ds = cp.synth_corpus([("constant", 10), ("ascii_text", 10)], 512, seed=1)
        path = tmp_path / "corpus.blocks"
        cp.write_block_archive(path, ds.blocks, 512)
        size, blocks = cp.read_block_archive(path)
        assert size == 512
        assert len(blocks) == 20
        assert all(a.data == b.data and a.label == b.label
                   for a, b in zip(blocks, ds.blocks))

    def test_header_format(self, tmp_path):
        path = tmp_path / "c.blocks"
        cp.write_block_archive(path, [cp.Block(bytes(512), 3)], 512)
        first = path.read_bytes().split(b"\n", 1)[0]
        assert first == b"fragnet-blocks v1 512 1"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.blocks"
        path.write_bytes(b"something else\n")
        with pytest.raises(ValueError):
            cp.read_block_archive(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "t.blocks"
        cp.write_block_archive(path, [cp.Block(bytes(512), 0)] * 4, 512)
        data = path.read_bytes()
        path.write_bytes(data[:-3])
        with pytest.raises(ValueError):
            cp.read_block_archive(path)

    def test_wrong_block_length_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            cp.write_block_archive(tmp_path / "x.blocks",
                                   [cp.Block(bytes(100), 0)], 512)


class TestIngestDirectory:
    def test_labels_from_extension(self, tmp_path):
        rng = np.random.default_rng(0)
        (tmp_path / "a.txt").write_bytes(rng.integers(0, 256, 2048, dtype=np.uint8).tobytes())
        (tmp_path / "b.jpg").write_bytes(rng.integers(0, 256, 2048, dtype=np.uint8).tobytes())
        (tmp_path / "ignore.zzz").write_bytes(bytes(2048))
        (tmp_path / "short.png").write_bytes(bytes(64))
        blocks = cp.ingest_directory(tmp_path, 512, blocks_per_file=2, seed=0)
        labels = {b.label for b in blocks}
        assert labels == {cp.TYPE_NAMES.index("txt"), cp.JPEG_LABEL}
        assert len(blocks) == 4

    def test_deterministic(self, tmp_path):
        (tmp_path / "a.txt").write_bytes(bytes(range(256)) * 8)
        a = cp.ingest_directory(tmp_path, 512, 3, seed=1)
        b = cp.ingest_directory(tmp_path, 512, 3, seed=1)
        assert [x.data for x in a] == [y.data for y in b]
