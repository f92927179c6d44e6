"""Dataset persistence (the AMCD binary container) and stratified splitting.

AMCD layout, all little-endian:

    magic   4 bytes  b"AMCD"
    version u16      currently 1
    nclass  u32
    names   nclass x (u16 byte-length + UTF-8 bytes)
    L       u32      frame length in samples
    nrec    u32
    records nrec x (u8 class_id, i16 snr_db, 2*L float32 row-major)

SNR is stored as i16; +32767 is the "noiseless" sentinel.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .sigsyn import ModulationClass, SignalFrame

MAGIC = b"AMCD"
VERSION = 1


@dataclass
class Dataset:
    frames: list[SignalFrame]
    class_names: list[str]
    frame_len: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.class_names) != len(set(self.class_names)):
            raise ValueError("duplicate class names")
        self._index = {n: i for i, n in enumerate(self.class_names)}
        for f in self.frames:
            if f.label.name not in self._index:
                raise ValueError(f"frame label {f.label.name} not in class table")
            if f.iq.shape[1] != self.frame_len:
                raise ValueError(
                    f"frame length {f.iq.shape[1]} != dataset frame_len {self.frame_len}"
                )

    def __len__(self) -> int:
        return len(self.frames)

    def label_index(self, frame: SignalFrame) -> int:
        return self._index[frame.label.name]

    def snr_values(self) -> list[int]:
        return sorted({f.snr_db for f in self.frames})

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stack frames into (X [N,2,L] f32, labels [N] i64, snrs [N] i64)."""
        n = len(self.frames)
        x = np.zeros((n, 2, self.frame_len), dtype=np.float32)
        y = np.zeros(n, dtype=np.int64)
        s = np.zeros(n, dtype=np.int64)
        for i, f in enumerate(self.frames):
            x[i] = f.iq
            y[i] = self._index[f.label.name]
            s[i] = f.snr_db
        return x, y, s


def write_dataset(ds: Dataset, path: str | Path) -> None:
    """Serialize ``ds`` to the AMCD container at ``path``."""
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<H", VERSION)
    buf += struct.pack("<I", len(ds.class_names))
    for name in ds.class_names:
        raw = name.encode("utf-8")
        buf += struct.pack("<H", len(raw)) + raw
    buf += struct.pack("<I", ds.frame_len)
    buf += struct.pack("<I", len(ds.frames))
    for f in ds.frames:
        buf += struct.pack("<Bh", ds.label_index(f), f.snr_db)
        buf += f.iq.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


class _Cursor:
    """Byte reader that reports the offset of any truncation."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated file: needed {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_dataset(path: str | Path) -> Dataset:
    """Parse an AMCD container; exact inverse of :func:`write_dataset`."""
    cur = _Cursor(Path(path).read_bytes())
    magic = cur.take(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    (version,) = cur.unpack("<H")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    (nclass,) = cur.unpack("<I")
    names = []
    for _ in range(nclass):
        (nlen,) = cur.unpack("<H")
        names.append(cur.take(nlen).decode("utf-8"))
    (frame_len,) = cur.unpack("<I")
    (nrec,) = cur.unpack("<I")
    frames = []
    for _ in range(nrec):
        class_id, snr = cur.unpack("<Bh")
        if class_id >= nclass:
            raise FormatError(
                f"class_id {class_id} out of range at offset {cur.pos - 3}"
            )
        raw = cur.take(2 * frame_len * 4)
        iq = np.frombuffer(raw, dtype="<f4").reshape(2, frame_len)
        frames.append(
            SignalFrame(iq=iq.copy(), label=ModulationClass[names[class_id]], snr_db=snr)
        )
    if cur.pos != len(cur.data):
        raise FormatError(f"{len(cur.data) - cur.pos} trailing bytes at offset {cur.pos}")
    return Dataset(frames=frames, class_names=names, frame_len=frame_len)


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/test partition per (class, snr) cell.

    Each cell is shuffled deterministically and split as close to
    ``train_fraction`` as integer rounding allows. The outputs partition the
    input: no frame is dropped or duplicated.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    cells: dict[tuple[int, int], list[int]] = {}
    for i, f in enumerate(ds.frames):
        cells.setdefault((ds.label_index(f), f.snr_db), []).append(i)

    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for key in sorted(cells):
        idx = np.array(cells[key])
        perm = rng.permutation(len(idx))
        n_train = int(np.floor(len(idx) * train_fraction + 0.5))
        n_train = min(max(n_train, 0), len(idx))
        if n_train == 0 or n_train == len(idx):
            warnings.warn(
                f"cell (class={ds.class_names[key[0]]}, snr={key[1]}) contributes "
                f"nothing to one side of the split ({len(idx)} frames)"
            )
        train_idx.extend(idx[perm[:n_train]])
        test_idx.extend(idx[perm[n_train:]])

    def subset(indices: list[int]) -> Dataset:
        indices = sorted(indices)
        return Dataset(
            frames=[ds.frames[i] for i in indices],
            class_names=list(ds.class_names),
            frame_len=ds.frame_len,
            meta=dict(ds.meta),
        )

    return subset(train_idx), subset(test_idx)


def csv_dir_to_dataset(dir_path: str | Path, default_snr: int = 32767) -> Dataset:
    """Build a Dataset from a directory of per-frame CSV files.

    Each ``*.csv`` holds one frame: two comma-separated columns (I, Q), one
    row per sample, no header. The filename stem encodes the label and
    optionally the SNR as ``<CLASS>_<snr>_<anything>`` (e.g.
    ``QPSK_10_0001.csv``); a missing SNR field falls back to
    ``default_snr``. All frames must share the same length.
    """
    dir_path = Path(dir_path)
    files = sorted(dir_path.glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no .csv files in {dir_path}")
    known = {c.name for c in ModulationClass}
    frames = []
    frame_len = None
    for f in files:
        parts = f.stem.split("_")
        cls_name = parts[0]
        if cls_name not in known:
            raise ValueError(f"{f.name}: unknown class {cls_name!r}")
        snr = default_snr
        if len(parts) > 1:
            try:
                snr = int(parts[1])
            except ValueError:
                pass
        data = np.loadtxt(f, delimiter=",", dtype=np.float64, ndmin=2)
        if data.shape[1] != 2:
            raise ValueError(f"{f.name}: expected 2 columns (I, Q), got {data.shape[1]}")
        if frame_len is None:
            frame_len = data.shape[0]
        elif data.shape[0] != frame_len:
            raise ValueError(
                f"{f.name}: frame length {data.shape[0]} != first file's {frame_len}"
            )
        frames.append(
            SignalFrame(
                iq=data.T.astype(np.float32),
                label=ModulationClass[cls_name],
                snr_db=snr,
            )
        )
    present = {f.label.name for f in frames}
    names = [c.name for c in ModulationClass if c.name in present]
    return Dataset(frames=frames, class_names=names, frame_len=int(frame_len))
