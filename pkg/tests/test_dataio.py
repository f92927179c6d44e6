import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgamc import Dataset, ModulationClass, SignalFrame, read_dataset, split, write_dataset
from kgamc.dataio import csv_dir_to_dataset
from kgamc.errors import FormatError


def make_frame(rng, label=ModulationClass.BPSK, snr=0, length=16):
    iq = rng.normal(size=(2, length)).astype(np.float32)
    return SignalFrame(iq=iq, label=label, snr_db=snr)


def make_dataset(rng, n_per_cell=4, classes=(ModulationClass.BPSK, ModulationClass.QPSK),
                 snrs=(0, 10), length=16):
    frames = [
        make_frame(rng, label=c, snr=s, length=length)
        for c in classes
        for s in snrs
        for _ in range(n_per_cell)
    ]
    return Dataset(frames=frames, class_names=[c.name for c in classes], frame_len=length)


def frames_equal(a, b):
    return (
        np.array_equal(a.iq, b.iq) and a.label == b.label and a.snr_db == b.snr_db
    )


class TestContainer:
    def test_empty_dataset_header_only(self, tmp_path):
        ds = Dataset(frames=[], class_names=["BPSK"], frame_len=128)
        p = tmp_path / "empty.amcd"
        write_dataset(ds, p)
        raw = p.read_bytes()
        # magic + version + nclass + (len + "BPSK") + L + count
        assert len(raw) == 4 + 2 + 4 + (2 + 4) + 4 + 4
        back = read_dataset(p)
        assert len(back) == 0 and back.class_names == ["BPSK"]

    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = make_dataset(rng)
        p = tmp_path / "ds.amcd"
        write_dataset(ds, p)
        back = read_dataset(p)
        assert back.class_names == ds.class_names
        assert back.frame_len == ds.frame_len
        assert all(frames_equal(a, b) for a, b in zip(ds.frames, back.frames))
        # byte-for-byte on re-serialization
        p2 = tmp_path / "ds2.amcd"
        write_dataset(back, p2)
        assert p.read_bytes() == p2.read_bytes()

    def test_file_size_formula(self, tmp_path):
        rng = np.random.default_rng(1)
        ds = Dataset(
            frames=[make_frame(rng, length=128)],
            class_names=["BPSK"],
            frame_len=128,
        )
        p = tmp_path / "one.amcd"
        write_dataset(ds, p)
        header = 4 + 2 + 4 + (2 + 4) + 4 + 4
        record = 1 + 2 + 2 * 128 * 4
        assert p.stat().st_size == header + record

    def test_corrupt_magic(self, tmp_path):
        rng = np.random.default_rng(2)
        p = tmp_path / "bad.amcd"
        write_dataset(make_dataset(rng), p)
        raw = bytearray(p.read_bytes())
        raw[:4] = b"XXXX"
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            read_dataset(p)

    def test_truncation_names_offset(self, tmp_path):
        rng = np.random.default_rng(3)
        p = tmp_path / "trunc.amcd"
        write_dataset(make_dataset(rng), p)
        raw = p.read_bytes()
        p.write_bytes(raw[: len(raw) - 7])
        with pytest.raises(FormatError, match="offset"):
            read_dataset(p)

    def test_bad_version(self, tmp_path):
        rng = np.random.default_rng(4)
        p = tmp_path / "ver.amcd"
        write_dataset(make_dataset(rng), p)
        raw = bytearray(p.read_bytes())
        raw[4] = 99
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            read_dataset(p)

    def test_noiseless_sentinel_snr(self, tmp_path):
        rng = np.random.default_rng(5)
        ds = Dataset(
            frames=[make_frame(rng, snr=32767), make_frame(rng, snr=-20)],
            class_names=["BPSK"],
            frame_len=16,
        )
        p = tmp_path / "snr.amcd"
        write_dataset(ds, p)
        back = read_dataset(p)
        assert [f.snr_db for f in back.frames] == [32767, -20]

    @given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.integers(1, 3))
    @settings(max_examples=15, deadline=None)
    def test_round_trip_random(self, tmp_path_factory, seed, n_per_cell, n_snrs):
        rng = np.random.default_rng(seed)
        snrs = tuple(int(v) for v in rng.integers(-20, 19, size=n_snrs))
        ds = make_dataset(rng, n_per_cell=n_per_cell, snrs=snrs)
        p = tmp_path_factory.mktemp("rt") / "r.amcd"
        write_dataset(ds, p)
        back = read_dataset(p)
        assert all(frames_equal(a, b) for a, b in zip(ds.frames, back.frames))


class TestSplit:
    def test_eight_two(self):
        rng = np.random.default_rng(6)
        ds = make_dataset(rng, n_per_cell=10, classes=(ModulationClass.BPSK,), snrs=(0,))
        tr, te = split(ds, 0.8, seed=1)
        assert len(tr) == 8 and len(te) == 2

    def test_half_of_two(self):
        rng = np.random.default_rng(7)
        ds = make_dataset(rng, n_per_cell=2, classes=(ModulationClass.BPSK,), snrs=(0,))
        tr, te = split(ds, 0.5, seed=1)
        assert len(tr) == 1 and len(te) == 1

    def test_partition_property(self):
        rng = np.random.default_rng(8)
        ds = make_dataset(rng, n_per_cell=7, snrs=(0, 4, 8))
        tr, te = split(ds, 0.8, seed=3)
        assert len(tr) + len(te) == len(ds)

        def key(f):
            return (f.label.name, f.snr_db, f.iq.tobytes())

        all_in = sorted(key(f) for f in ds.frames)
        all_out = sorted(key(f) for f in tr.frames + te.frames)
        assert all_in == all_out
        assert not (set(key(f) for f in tr.frames) & set(key(f) for f in te.frames))

    def test_stratified_per_cell(self):
        rng = np.random.default_rng(9)
        ds = make_dataset(rng, n_per_cell=10, snrs=(0, 10))
        tr, te = split(ds, 0.8, seed=2)
        for c in (ModulationClass.BPSK, ModulationClass.QPSK):
            for s in (0, 10):
                n = sum(1 for f in tr.frames if f.label == c and f.snr_db == s)
                assert n == 8

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        ds = make_dataset(rng, n_per_cell=9)
        a_tr, a_te = split(ds, 0.7, seed=5)
        b_tr, b_te = split(ds, 0.7, seed=5)
        assert all(frames_equal(x, y) for x, y in zip(a_tr.frames, b_tr.frames))
        assert all(frames_equal(x, y) for x, y in zip(a_te.frames, b_te.frames))

    def test_degenerate_cell_warns(self):
        rng = np.random.default_rng(11)
        ds = make_dataset(rng, n_per_cell=1, classes=(ModulationClass.BPSK,), snrs=(0,))
        with pytest.warns(UserWarning, match="contributes nothing"):
            split(ds, 0.8, seed=1)

    def test_rejects_bad_fraction(self):
        rng = np.random.default_rng(12)
        ds = make_dataset(rng)
        for frac in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValueError):
                split(ds, frac, seed=0)

    @pytest.mark.filterwarnings("ignore:cell")
    @given(st.integers(0, 10_000), st.floats(0.1, 0.9))
    @settings(max_examples=20, deadline=None)
    def test_partition_random(self, seed, frac):
        rng = np.random.default_rng(seed)
        ds = make_dataset(rng, n_per_cell=5)
        tr, te = split(ds, frac, seed=seed)
        assert len(tr) + len(te) == len(ds)


class TestCsvConvert:
    def test_convert_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        d = tmp_path / "frames"
        d.mkdir()
        for i in range(3):
            data = rng.normal(size=(12, 2))
            np.savetxt(d / f"QPSK_10_{i:03d}.csv", data, delimiter=",")
        np.savetxt(d / "BPSK_0_000.csv", rng.normal(size=(12, 2)), delimiter=",")
        ds = csv_dir_to_dataset(d)
        assert len(ds) == 4
        assert ds.class_names == ["BPSK", "QPSK"]
        assert ds.frame_len == 12
        assert {f.snr_db for f in ds.frames} == {0, 10}

    def test_convert_rejects_unknown_class(self, tmp_path):
        d = tmp_path / "frames"
        d.mkdir()
        np.savetxt(d / "NOTACLASS_0_000.csv", np.zeros((4, 2)), delimiter=",")
        with pytest.raises(ValueError, match="unknown class"):
            csv_dir_to_dataset(d)

    def test_convert_rejects_mixed_lengths(self, tmp_path):
        d = tmp_path / "frames"
        d.mkdir()
        np.savetxt(d / "BPSK_0_000.csv", np.zeros((4, 2)), delimiter=",")
        np.savetxt(d / "BPSK_0_001.csv", np.zeros((6, 2)), delimiter=",")
        with pytest.raises(ValueError, match="length"):
            csv_dir_to_dataset(d)
