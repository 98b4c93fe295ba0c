"""Loss, NMSE/suppression, and Welch PSD used for all reporting.

NMSE here is normalized by the power of the reference (received) signal,
so that suppression := -nmse_db is the interference-power reduction.  The
alternative convention normalizing by Tx power is available through the
``tx`` argument of :func:`nmse` for inspection.
"""

from dataclasses import dataclass

import numpy as np

from .signal_core import ComplexSequence, RealSequence, SignalError

RESIDUAL_FLOOR = 1e-300


@dataclass(frozen=True)
class NmseReport:
    nmse_db: float
    suppression_db: float
    num_samples: int
    nmse_tx_denominator_db: float = None

    def to_dict(self):
        d = {
            "nmse_db": _fmt_db(self.nmse_db),
            "suppression_db": _fmt_db(self.suppression_db),
            "num_samples": self.num_samples,
            "denominator_convention": "reference-power",
        }
        if self.nmse_tx_denominator_db is not None:
            d["nmse_tx_denominator_db"] = _fmt_db(self.nmse_tx_denominator_db)
        return d


def _fmt_db(v):
    if v == float("-inf"):
        return "-inf"
    if v == float("inf"):
        return "inf"
    return v


@dataclass(frozen=True)
class PsdEstimate:
    freqs_hz: np.ndarray
    psd_db_per_hz: np.ndarray
    resolution_bw_hz: float

    def __post_init__(self):
        if len(self.freqs_hz) != len(self.psd_db_per_hz):
            raise SignalError("freqs and psd lengths differ")
        if np.any(np.diff(self.freqs_hz) <= 0):
            raise SignalError("frequencies must be strictly increasing")

    def linear(self):
        return 10.0 ** (np.asarray(self.psd_db_per_hz) / 10.0)

    def integrated_power(self):
        return float(np.sum(self.linear()) * self.resolution_bw_hz)


def _as_samples(x):
    if isinstance(x, (RealSequence, ComplexSequence)):
        if isinstance(x, RealSequence):
            return x.samples, x.sample_rate_hz, True
        return x.iq, x.sample_rate_hz, False
    x = np.asarray(x)
    return x, 1.0, not np.iscomplexobj(x)


def mse_loss(y, y_ref):
    """Mean of squared differences."""
    a, _, _ = _as_samples(y)
    b, _, _ = _as_samples(y_ref)
    if len(a) != len(b):
        raise SignalError(f"length mismatch: {len(a)} vs {len(b)}")
    d = a - b
    return float(np.mean(d * d))


def nmse(y, y_ref, tx=None):
    """Residual power over reference power, in dB.

    Zero residual reports -inf (serialized as the string "-inf").  When
    ``tx`` is given, the Tx-power-normalized variant is also computed.
    """
    a, _, _ = _as_samples(y)
    b, _, _ = _as_samples(y_ref)
    if len(a) != len(b):
        raise SignalError(f"length mismatch: {len(a)} vs {len(b)}")
    ref_power = float(np.dot(b, b))
    if ref_power == 0.0:
        raise SignalError("all-zero reference signal")
    resid = float(np.dot(a - b, a - b))
    if resid < RESIDUAL_FLOOR:
        nmse_db = float("-inf")
    else:
        nmse_db = 10.0 * np.log10(resid / ref_power)
    tx_db = None
    if tx is not None:
        xs, _, real = _as_samples(tx)
        tx_power = float(np.sum(np.abs(xs) ** 2))
        if tx_power > 0:
            tx_db = float("-inf") if resid < RESIDUAL_FLOOR else 10.0 * np.log10(resid / tx_power)
    return NmseReport(nmse_db, -nmse_db, len(a), tx_db)


def psd_welch(x, segment_len, overlap=None, window="hann"):
    """Welch-averaged periodogram (density scaling, V^2/Hz).

    One-sided for real input, two-sided centered for complex.  The hann
    window is applied per segment with power normalization so that the
    integrated PSD matches the time-domain mean power.
    """
    samples, fs, real_input = _as_samples(x)
    n = len(samples)
    if segment_len > n:
        raise SignalError(f"segment_len {segment_len} exceeds signal length {n}")
    if segment_len < 2 or segment_len & (segment_len - 1):
        raise SignalError("segment_len must be a power of two >= 2")
    if window != "hann":
        raise SignalError(f"unsupported window {window!r}")
    if overlap is None:
        overlap = segment_len // 2
    if not (0 <= overlap < segment_len):
        raise SignalError("overlap must be in [0, segment_len)")

    win = np.hanning(segment_len)
    win_power = np.sum(win * win)
    step = segment_len - overlap
    n_segments = 1 + (n - segment_len) // step
    acc = np.zeros(segment_len)
    for s in range(n_segments):
        seg = samples[s * step : s * step + segment_len] * win
        spec = np.fft.fft(seg)
        acc += np.abs(spec) ** 2
    # density scaling: divide by fs * sum(win^2)
    pxx = acc / (n_segments * fs * win_power)
    df = fs / segment_len

    if real_input:
        half = segment_len // 2 + 1
        pxx_one = pxx[:half].copy()
        pxx_one[1 : segment_len // 2] *= 2.0
        freqs = np.arange(half) * df
        pxx = pxx_one
    else:
        pxx = np.fft.fftshift(pxx)
        freqs = np.fft.fftshift(np.fft.fftfreq(segment_len, d=1.0 / fs))

    with np.errstate(divide="ignore"):
        psd_db = 10.0 * np.log10(np.maximum(pxx, RESIDUAL_FLOOR))
    return PsdEstimate(freqs, psd_db, df)


def psd_to_csv(psd: PsdEstimate, path):
    with open(path, "w") as fh:
        fh.write("freq_hz,psd_db\n")
        for f, p in zip(psd.freqs_hz, psd.psd_db_per_hz):
            fh.write(f"{float(f)!r},{float(p)!r}\n")
