"""Sample-sequence types, delay embedding, and dataset I/O."""

import csv
import struct
from dataclasses import dataclass

import numpy as np

BINARY_MAGIC = b"IMD2"


class SignalError(ValueError):
    """Invalid signal data or arguments."""


class ParseError(SignalError):
    """Malformed dataset file."""


@dataclass(frozen=True)
class ComplexSequence:
    """Baseband I/Q sample sequence."""

    iq: np.ndarray  # complex128
    sample_rate_hz: float

    def __post_init__(self):
        iq = np.asarray(self.iq, dtype=np.complex128)
        object.__setattr__(self, "iq", iq)
        if iq.ndim != 1 or len(iq) < 1:
            raise SignalError("sequence must be 1-D and nonempty")
        if not np.all(np.isfinite(iq.real)) or not np.all(np.isfinite(iq.imag)):
            raise SignalError("non-finite sample in complex sequence")
        if not (self.sample_rate_hz > 0):
            raise SignalError("sample_rate_hz must be positive")

    def __len__(self):
        return len(self.iq)

    def magnitude(self):
        return np.abs(self.iq)


@dataclass(frozen=True)
class RealSequence:
    """Real-valued sample sequence (received signal or model output)."""

    samples: np.ndarray  # float64
    sample_rate_hz: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", s)
        if s.ndim != 1 or len(s) < 1:
            raise SignalError("sequence must be 1-D and nonempty")
        if not np.all(np.isfinite(s)):
            raise SignalError("non-finite sample in real sequence")
        if not (self.sample_rate_hz > 0):
            raise SignalError("sample_rate_hz must be positive")

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class DelaySet:
    """Strictly increasing non-negative sample delays."""

    delays: tuple

    def __post_init__(self):
        d = tuple(int(x) for x in self.delays)
        object.__setattr__(self, "delays", d)
        if len(d) == 0:
            raise SignalError("delay set must be nonempty")
        if any(x < 0 for x in d):
            raise SignalError("delays must be non-negative")
        if any(b <= a for a, b in zip(d, d[1:])):
            raise SignalError("delays must be strictly increasing")

    def __len__(self):
        return len(self.delays)

    @property
    def max_delay(self):
        return self.delays[-1]


@dataclass(frozen=True)
class Dataset:
    """Paired Tx/Rx sequences with a valid index range."""

    tx: ComplexSequence
    rx: RealSequence
    valid_range: tuple = None

    def __post_init__(self):
        if len(self.tx) != len(self.rx):
            raise SignalError("tx and rx lengths differ")
        if self.tx.sample_rate_hz != self.rx.sample_rate_hz:
            raise SignalError("tx and rx sample rates differ")
        if self.valid_range is None:
            object.__setattr__(self, "valid_range", (0, len(self.tx)))

    def __len__(self):
        return len(self.tx)


def delay_embed(tx: ComplexSequence, delays: DelaySet) -> np.ndarray:
    """Matrix of delayed sample magnitudes, one row per usable sample.

    Row n (n = max_delay .. end) is (|x_{n-d_0}|, ..., |x_{n-d_{M-1}}|);
    the first max_delay samples are dropped rather than zero-padded.
    """
    n = len(tx)
    dmax = delays.max_delay
    if dmax >= n:
        raise SignalError(f"max delay {dmax} exceeds sequence length {n}")
    mag = tx.magnitude()
    rows = n - dmax
    out = np.empty((rows, len(delays)))
    for j, d in enumerate(delays.delays):
        out[:, j] = mag[dmax - d : n - d]
    return out


def normalize_magnitude(tx: ComplexSequence):
    """Scale so the maximum magnitude is 1; returns (scaled, scale)."""
    mag = tx.magnitude()
    scale = float(mag.max())
    if scale == 0.0:
        raise SignalError("all-zero sequence cannot be normalized")
    return ComplexSequence(tx.iq / scale, tx.sample_rate_hz), scale


def save_dataset_csv(ds: Dataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tx_i", "tx_q", "rx"])
        for z, r in zip(ds.tx.iq, ds.rx.samples):
            w.writerow([repr(float(z.real)), repr(float(z.imag)), repr(float(r))])


def save_dataset_binary(ds: Dataset, path):
    n = len(ds)
    buf = np.empty((n, 3))
    buf[:, 0] = ds.tx.iq.real
    buf[:, 1] = ds.tx.iq.imag
    buf[:, 2] = ds.rx.samples
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<I", n))
        fh.write(buf.astype("<f8").tobytes())


def load_dataset(path, fmt="csv", sample_rate_hz=1.0) -> Dataset:
    """Read a dataset file; ``fmt`` is 'csv' or 'f64le-binary'."""
    if fmt == "csv":
        return _load_csv(path, sample_rate_hz)
    if fmt == "f64le-binary":
        return _load_binary(path, sample_rate_hz)
    raise SignalError(f"unknown dataset format {fmt!r}")


def _load_csv(path, sample_rate_hz):
    tx = []
    rx = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["tx_i", "tx_q", "rx"]:
            raise ParseError(f"{path}: line 1: expected header tx_i,tx_q,rx")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"{path}: line {lineno}: expected 3 columns, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric value") from None
            if not all(np.isfinite(v) for v in vals):
                raise ParseError(f"{path}: line {lineno}: non-finite value")
            tx.append(complex(vals[0], vals[1]))
            rx.append(vals[2])
    if not tx:
        raise ParseError(f"{path}: no data rows")
    return Dataset(
        ComplexSequence(np.array(tx), sample_rate_hz),
        RealSequence(np.array(rx), sample_rate_hz),
    )


def _load_binary(path, sample_rate_hz):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != BINARY_MAGIC:
            raise ParseError(f"{path}: bad magic bytes {magic!r}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise ParseError(f"{path}: truncated length field")
        (n,) = struct.unpack("<I", raw)
        data = np.frombuffer(fh.read(n * 24), dtype="<f8")
        if data.size != n * 3:
            raise ParseError(f"{path}: expected {n} samples, file truncated")
    data = data.reshape(n, 3)
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: non-finite value in binary data")
    return Dataset(
        ComplexSequence(data[:, 0] + 1j * data[:, 1], sample_rate_hz),
        RealSequence(data[:, 2].copy(), sample_rate_hz),
    )
