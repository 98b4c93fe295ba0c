import numpy as np
import pytest
from hypothesis import given, strategies as st

from imd2cancel.signal_core import (ComplexSequence, Dataset, DelaySet, ParseError,
                                    RealSequence, SignalError, delay_embed,
                                    load_dataset, normalize_magnitude,
                                    save_dataset_binary, save_dataset_csv)


def cseq(vals, fs=1.0):
    return ComplexSequence(np.array(vals, dtype=np.complex128), fs)


class TestTypes:
    def test_rejects_empty(self):
        with pytest.raises(SignalError):
            ComplexSequence(np.array([], dtype=np.complex128), 1.0)

    def test_rejects_nan(self):
        with pytest.raises(SignalError):
            RealSequence(np.array([1.0, np.nan]), 1.0)

    def test_rejects_bad_rate(self):
        with pytest.raises(SignalError):
            RealSequence(np.array([1.0]), 0.0)

    def test_delays_must_increase(self):
        with pytest.raises(SignalError):
            DelaySet((0, 2, 2))
        with pytest.raises(SignalError):
            DelaySet((3, 1))

    def test_dataset_length_mismatch(self):
        with pytest.raises(SignalError):
            Dataset(cseq([1, 2]), RealSequence(np.array([1.0]), 1.0))


class TestDelayEmbed:
    def test_unit_sample(self):
        out = delay_embed(cseq([1 + 0j]), DelaySet((0,)))
        assert out.tolist() == [[1.0]]

    def test_three_four_five(self):
        out = delay_embed(cseq([3 + 4j, 0]), DelaySet((0,)))
        assert out.tolist() == [[5.0], [0.0]]

    def test_two_delays_hand_computed(self):
        out = delay_embed(cseq([1, 1j, 1 + 1j]), DelaySet((0, 1)))
        expected = np.array([[1.0, 1.0], [np.sqrt(2.0), 1.0]])
        np.testing.assert_allclose(out, expected)

    def test_delay_too_long(self):
        with pytest.raises(SignalError):
            delay_embed(cseq([1, 2]), DelaySet((0, 2)))

    def test_zero_delay_is_magnitude(self):
        rng = np.random.default_rng(0)
        x = cseq(rng.normal(size=20) + 1j * rng.normal(size=20))
        out = delay_embed(x, DelaySet((0,)))
        np.testing.assert_allclose(out[:, 0], np.abs(x.iq))

    def test_entries_nonnegative(self):
        rng = np.random.default_rng(1)
        x = cseq(rng.normal(size=50) + 1j * rng.normal(size=50))
        assert np.all(delay_embed(x, DelaySet((0, 2, 5))) >= 0)

    def test_column_alignment(self):
        # column j of delays [d_j] equals column 0 of delays [0] shifted by d_j
        rng = np.random.default_rng(2)
        x = cseq(rng.normal(size=30) + 1j * rng.normal(size=30))
        mag = np.abs(x.iq)
        for d in (1, 3, 7):
            col = delay_embed(x, DelaySet((d,)))[:, 0]
            np.testing.assert_allclose(col, mag[: 30 - d])

    def test_row_count(self):
        x = cseq(np.arange(1, 11))
        assert delay_embed(x, DelaySet((0, 3))).shape == (7, 2)


class TestNormalize:
    def test_simple(self):
        out, scale = normalize_magnitude(cseq([2, 1j]))
        assert scale == 2.0
        np.testing.assert_allclose(out.iq, [1, 0.5j])

    def test_identity_when_unit(self):
        out, scale = normalize_magnitude(cseq([1, 0.5]))
        assert scale == 1.0
        np.testing.assert_allclose(out.iq, [1, 0.5])

    def test_all_zero_rejected(self):
        with pytest.raises(SignalError):
            normalize_magnitude(cseq([0, 0]))

    @given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False,
                                       allow_infinity=False),
                    min_size=1, max_size=30).filter(lambda v: any(abs(z) > 1e-9 for z in v)))
    def test_idempotent(self, vals):
        once, scale = normalize_magnitude(cseq(vals))
        twice, scale2 = normalize_magnitude(once)
        assert scale > 0
        assert scale2 == pytest.approx(1.0)
        np.testing.assert_allclose(twice.iq, once.iq)


class TestIO:
    def test_csv_round_trip(self, tmp_path):
        ds = Dataset(cseq([1 + 2j, 3, -1j, 0.5 + 0.5j]),
                     RealSequence(np.array([0.1, 0.2, 0.3, 0.4]), 1.0))
        p = tmp_path / "d.csv"
        save_dataset_csv(ds, p)
        back = load_dataset(p, "csv")
        assert len(back) == 4
        np.testing.assert_allclose(back.tx.iq, ds.tx.iq)
        np.testing.assert_allclose(back.rx.samples, ds.rx.samples)

    def test_csv_nan_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("tx_i,tx_q,rx\n1.0,2.0,nan\n")
        with pytest.raises(ParseError, match="line 2"):
            load_dataset(p, "csv")

    def test_csv_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ParseError, match="line 1"):
            load_dataset(p, "csv")

    def test_csv_wrong_columns(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("tx_i,tx_q,rx\n1.0,2.0\n")
        with pytest.raises(ParseError, match="line 2"):
            load_dataset(p, "csv")

    def test_binary_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        ds = Dataset(cseq(rng.normal(size=3) + 1j * rng.normal(size=3)),
                     RealSequence(rng.normal(size=3), 1.0))
        p = tmp_path / "d.bin"
        save_dataset_binary(ds, p)
        back = load_dataset(p, "f64le-binary")
        assert len(back) == 3
        np.testing.assert_array_equal(back.tx.iq, ds.tx.iq)
        np.testing.assert_array_equal(back.rx.samples, ds.rx.samples)

    def test_binary_bad_magic(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"XXXX" + b"\x00" * 20)
        with pytest.raises(ParseError, match="magic"):
            load_dataset(p, "f64le-binary")

    def test_binary_truncated(self, tmp_path):
        p = tmp_path / "trunc.bin"
        p.write_bytes(b"IMD2" + (5).to_bytes(4, "little") + b"\x00" * 24)
        with pytest.raises(ParseError, match="truncated"):
            load_dataset(p, "f64le-binary")
