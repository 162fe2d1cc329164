import json
import struct
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from amclab import dataset, modem
from amclab.dataset import Dataset, FormatError, SplitSpec


def toy(n_classes=10, n_snrs=26, per_cell=10, t=16, seed=0) -> Dataset:
    """Random stand-in frames with a flat (class, snr) histogram."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_classes), n_snrs * per_cell)
    snrs = np.tile(np.repeat(np.arange(-20, -20 + 2 * n_snrs, 2), per_cell), n_classes)
    iq = rng.standard_normal((len(labels), t, 2)).astype(np.float32)
    names = list(modem.DEFAULT_SCHEMES[:n_classes])
    return Dataset(iq, labels, snrs, names)


@pytest.fixture(scope="module")
def ds():
    return toy()


class TestFile:
    def test_round_trip_bitwise(self, ds, tmp_path):
        path = dataset.write_dataset(ds, tmp_path / "d.amcd")
        back = dataset.read_dataset(path)
        assert back.iq.tobytes() == ds.iq.tobytes()
        np.testing.assert_array_equal(back.labels, ds.labels)
        np.testing.assert_array_equal(back.snrs, ds.snrs)
        assert back.class_names == ds.class_names
        assert back.groups == ds.groups

    def test_rewrite_is_byte_identical(self, ds, tmp_path):
        a = dataset.write_dataset(ds, tmp_path / "a.amcd")
        b = dataset.write_dataset(dataset.read_dataset(a), tmp_path / "b.amcd")
        assert a.read_bytes() == b.read_bytes()

    def test_header_fields(self, ds, tmp_path):
        buf = dataset.write_dataset(ds, tmp_path / "d.amcd").read_bytes()
        assert struct.unpack_from("<4s5I", buf) == (b"AMCD", 1, 2600, 16, 10, 26)
        record = 2 + 2 + 16 * 2 * 4
        names = sum(2 + len(n) for n in ds.class_names)
        assert len(buf) == 24 + names + 2600 * record

    def test_record_layout(self, tmp_path):
        iq = np.arange(8, dtype=np.float32).reshape(1, 4, 2)
        small = Dataset(iq, [1], [-20], ["BPSK", "QPSK"])
        buf = dataset.write_dataset(small, tmp_path / "s.amcd").read_bytes()
        body = buf[24 + 6 + 6 :]
        assert struct.unpack_from("<Hh", body) == (1, -20)
        np.testing.assert_array_equal(np.frombuffer(body[4:], "<f4"), np.arange(8))

    def test_manifest_sidecar(self, ds, tmp_path):
        path = dataset.write_dataset(ds, tmp_path / "d.amcd", manifest={"note": "x"})
        side = json.loads((tmp_path / "d.amcd.manifest.json").read_text())
        assert side["class_names"] == ds.class_names
        assert side["groups"] == [modem.GROUP_OF[n] for n in ds.class_names]
        assert side["note"] == "x"
        assert dataset.read_dataset(path).meta["note"] == "x"

    def test_empty(self, tmp_path):
        empty = Dataset.from_frames([], ["BPSK", "QPSK"], frame_len=64)
        path = dataset.write_dataset(empty, tmp_path / "e.amcd")
        assert struct.unpack_from("<4s5I", path.read_bytes())[2] == 0
        back = dataset.read_dataset(path)
        assert len(back) == 0 and back.frame_len == 64

    @pytest.mark.parametrize("keep", [0, 10, 24, 27, 200, -1])
    def test_truncated(self, ds, tmp_path, keep):
        buf = dataset.write_dataset(ds, tmp_path / "d.amcd").read_bytes()
        bad = tmp_path / "bad.amcd"
        bad.write_bytes(buf[:keep])
        with pytest.raises(FormatError) as err:
            dataset.read_dataset(bad)
        assert 0 <= err.value.offset <= len(buf)
        assert "offset" in str(err.value)

    def test_bad_magic_and_version(self, ds, tmp_path):
        buf = bytearray(dataset.write_dataset(ds, tmp_path / "d.amcd").read_bytes())
        for pos, value in ((0, ord("X")), (4, 9)):
            bad = bytearray(buf)
            bad[pos] = value
            (tmp_path / "bad.amcd").write_bytes(bytes(bad))
            with pytest.raises(FormatError) as err:
                dataset.read_dataset(tmp_path / "bad.amcd")
            assert err.value.offset == pos

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError, match="missing.amcd"):
            dataset.read_dataset(tmp_path / "missing.amcd")

    def test_mixed_lengths_rejected(self):
        frames = [modem.Frame(np.zeros((8, 2), np.float32), 0, 0), modem.Frame(np.zeros((9, 2), np.float32), 0, 0)]
        with pytest.raises(ValueError):
            Dataset.from_frames(frames, ["BPSK"])


class TestSynth:
    def test_counts(self):
        cfg = modem.ChannelConfig(snr_grid=tuple(range(-20, 31, 2)), frames_per_class_per_snr=10, frame_len=64, seed=1)
        names = list(modem.DEFAULT_SCHEMES[:10])
        ds = dataset.synth_dataset(names, cfg)
        assert len(ds) == 2600
        assert set(Counter(zip(ds.labels, ds.snrs)).values()) == {10}

    def test_same_seed_same_file(self, tmp_path):
        cfg = modem.ChannelConfig(snr_grid=(0, 10), frames_per_class_per_snr=5, frame_len=64, seed=42)
        a = dataset.synth_dataset(["BPSK", "GMSK", "FM"], cfg, tmp_path / "a.amcd")
        dataset.synth_dataset(["BPSK", "GMSK", "FM"], cfg, tmp_path / "b.amcd")
        assert (tmp_path / "a.amcd").read_bytes() == (tmp_path / "b.amcd").read_bytes()
        assert len(a) == 30

    def test_unwritable_path_names_it(self, tmp_path):
        cfg = modem.ChannelConfig(snr_grid=(0,), frames_per_class_per_snr=2, frame_len=64)
        target = tmp_path / "no" / "such" / "dir.amcd"
        with pytest.raises(OSError, match="dir.amcd"):
            dataset.synth_dataset(["BPSK", "QPSK"], cfg, target)


class TestSplit:
    def test_half_split_per_cell(self, ds):
        train, test = dataset.stratified_split(ds, SplitSpec(0.5, seed=3))
        assert len(train) == len(test) == 1300
        for part in (train, test):
            assert set(Counter(zip(part.labels, part.snrs)).values()) == {5}

    def test_disjoint_exhaustive(self, ds):
        tr, te = dataset.stratified_indices(ds.labels, ds.snrs, SplitSpec(0.3, seed=1))
        assert not set(tr) & set(te)
        assert sorted(np.concatenate([tr, te])) == list(range(len(ds)))

    def test_union_is_original_multiset(self, ds):
        train, test = dataset.stratified_split(ds, SplitSpec(0.5, seed=4))
        joined = np.concatenate([train.iq, test.iq]).reshape(len(ds), -1)
        key = lambda a: sorted(map(bytes, a))
        assert key(joined) == key(ds.iq.reshape(len(ds), -1))

    def test_same_seed_same_membership(self, ds):
        a = dataset.stratified_indices(ds.labels, ds.snrs, SplitSpec(0.2, seed=11))
        b = dataset.stratified_indices(ds.labels, ds.snrs, SplitSpec(0.2, seed=11))
        c = dataset.stratified_indices(ds.labels, ds.snrs, SplitSpec(0.2, seed=12))
        assert np.array_equal(a[1], b[1])
        assert not np.array_equal(a[1], c[1])

    @pytest.mark.parametrize("fraction", [0.1, 0.2, 0.35, 0.5, 0.9])
    def test_per_stratum_error_at_most_one(self, fraction):
        data = toy(n_classes=3, n_snrs=4, per_cell=7)
        _, te = dataset.stratified_indices(data.labels, data.snrs, SplitSpec(fraction, 0))
        counts = Counter(zip(data.labels[te], data.snrs[te]))
        assert all(abs(counts[k] - 7 * fraction) <= 1 for k in set(zip(data.labels, data.snrs)))
        # both sides of every stratum stay non-empty, even when 7 * fraction < 1
        assert all(1 <= counts[k] <= 6 for k in set(zip(data.labels, data.snrs)))

    def test_tiny_stratum_named(self):
        data = Dataset(np.zeros((3, 8, 2)), [0, 0, 1], [4, 4, 6], ["BPSK", "QPSK"])
        with pytest.raises(ValueError, match=r"class=1, snr=6"):
            dataset.stratified_split(data, SplitSpec(0.5))

    def test_fraction_bounds(self, ds):
        with pytest.raises(ValueError):
            dataset.stratified_split(ds, SplitSpec(1.0))


class TestBurst:
    @pytest.fixture
    def frame(self):
        return modem.Frame(np.arange(2048, dtype=np.float32).reshape(1024, 2), 3, 10)

    def test_full_length(self, frame):
        out = dataset.truncate_burst(frame, 1024, np.random.default_rng(0))
        np.testing.assert_array_equal(out.iq, frame.iq)

    def test_sixteen_samples(self, frame):
        out = dataset.truncate_burst(frame, 16, np.random.default_rng(1))
        assert out.iq.shape == (16, 2) and (out.label, out.snr_db) == (3, 10)
        start = int(out.iq[0, 0]) // 2
        np.testing.assert_array_equal(out.iq, frame.iq[start : start + 16])

    @pytest.mark.parametrize("n", [0, 1025])
    def test_bad_length(self, frame, n):
        with pytest.raises(ValueError):
            dataset.truncate_burst(frame, n, np.random.default_rng(0))

    def test_start_uniformity(self, frame):
        rng = np.random.default_rng(2024)
        starts = [int(dataset.truncate_burst(frame, 512, rng).iq[0, 0]) // 2 for _ in range(10000)]
        counts, _ = np.histogram(starts, bins=16, range=(0, 513))
        assert stats.chisquare(counts).pvalue > 0.001

    def test_dataset_truncation_is_contiguous(self):
        data = toy(n_classes=2, n_snrs=2, per_cell=3, t=64)
        out = dataset.truncate_dataset(data, 20, np.random.default_rng(3))
        assert out.iq.shape == (12, 20, 2)
        for src, part in zip(data.iq, out.iq):
            hits = [s for s in range(45) if np.array_equal(src[s : s + 20], part)]
            assert hits


class TestBatches:
    def test_counts(self, ds):
        sizes = [len(y) for _, y, _ in dataset.batch_iter(ds, 32)]
        assert sizes == [32] * 81 + [8]

    def test_file_order_without_shuffle(self, ds):
        x, y, s = next(dataset.batch_iter(ds, 5))
        np.testing.assert_array_equal(x.data, ds.iq[:5])
        np.testing.assert_array_equal(y, ds.labels[:5])

    def test_seeded_shuffle(self, ds):
        a = [y.tolist() for _, y, _ in dataset.batch_iter(ds, 64, shuffle=True, seed=7)]
        b = [y.tolist() for _, y, _ in dataset.batch_iter(ds, 64, shuffle=True, seed=7)]
        assert a == b
        seen = np.concatenate([x.data for x, _, _ in dataset.batch_iter(ds, 64, shuffle=True, seed=7)])
        assert len(seen) == len(ds)

    def test_bad_batch_size(self, ds):
        with pytest.raises(ValueError):
            next(dataset.batch_iter(ds, 0))
