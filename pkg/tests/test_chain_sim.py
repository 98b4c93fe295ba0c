import numpy as np
import pytest

from imd2cancel.chain_sim import (ChainConfig, OfdmConfig, gen_ofdm, imd2_chain,
                                  load_chain_config, pa_model, power_budget,
                                  rapp_saturation)
from imd2cancel.cheb_model import ChebyshevModel
from imd2cancel.optim import OptimConfig, train
from imd2cancel.signal_core import ComplexSequence, DelaySet, SignalError


class TestOfdm:
    def test_length(self):
        x = gen_ofdm(OfdmConfig(n_subcarriers=64, n_symbols=1, cp_len=16))
        assert len(x) == 80

    def test_deterministic(self):
        a = gen_ofdm(OfdmConfig(seed=5))
        b = gen_ofdm(OfdmConfig(seed=5))
        np.testing.assert_array_equal(a.iq, b.iq)

    def test_seed_changes_signal(self):
        a = gen_ofdm(OfdmConfig(seed=1))
        b = gen_ofdm(OfdmConfig(seed=2))
        assert not np.array_equal(a.iq, b.iq)

    def test_power_matches_config(self):
        cfg = OfdmConfig(tx_power_dbm=-10.0, seed=3)
        x = gen_ofdm(cfg)
        p_dbm = 10 * np.log10(np.mean(np.abs(x.iq) ** 2))
        assert p_dbm == pytest.approx(-10.0, abs=0.05)

    def test_papr_realistic(self):
        x = gen_ofdm(OfdmConfig(n_subcarriers=64, n_symbols=8, cp_len=16, seed=4))
        p = np.abs(x.iq) ** 2
        papr_db = 10 * np.log10(p.max() / p.mean())
        assert papr_db > 6.0

    def test_parseval(self):
        # without the power rescaling, mean sample power equals mean symbol power
        cfg = OfdmConfig(n_subcarriers=128, n_symbols=4, cp_len=0, seed=6, tx_power_dbm=0.0)
        x = gen_ofdm(cfg)
        assert np.mean(np.abs(x.iq) ** 2) == pytest.approx(1.0, rel=0.05)

    def test_invalid_cp(self):
        with pytest.raises(SignalError):
            OfdmConfig(n_subcarriers=64, cp_len=64)

    def test_subcarriers_power_of_two(self):
        with pytest.raises(SignalError):
            OfdmConfig(n_subcarriers=100)


class TestPaModel:
    def test_small_signal_linear(self):
        x = ComplexSequence(np.array([1e-6 + 0j, 1e-6j]), 1.0)
        out = pa_model(x, 26.0, 24.0)
        g = 10 ** (26.0 / 20.0)
        np.testing.assert_allclose(out.iq, g * x.iq, rtol=1e-3)

    def test_small_signal_30db_below_p1db(self):
        g = 10 ** (26.0 / 20.0)
        a_1db = rapp_saturation(26.0, 24.0) * (10 ** 0.2 - 1) ** 0.25 / g
        a = a_1db / 10 ** (30 / 20)
        out = pa_model(ComplexSequence(np.array([a + 0j]), 1.0), 26.0, 24.0)
        gain_db = 20 * np.log10(np.abs(out.iq[0]) / a)
        assert gain_db == pytest.approx(26.0, abs=0.01)

    def test_saturation_limit(self):
        x_sat = rapp_saturation(26.0, 24.0)
        out = pa_model(ComplexSequence(np.array([1e6 + 0j]), 1.0), 26.0, 24.0)
        assert np.abs(out.iq[0]) == pytest.approx(x_sat, rel=1e-3)

    def test_one_db_compression_at_p1db(self):
        g = 10 ** (26.0 / 20.0)
        x_sat = rapp_saturation(26.0, 24.0)
        # numerically solve for the input amplitude whose output is p1db dBm
        target_out = 10 ** (24.0 / 20.0)
        a_grid = np.linspace(0.01, 10.0, 2_000_000)
        out = g * a_grid / (1 + (g * a_grid / x_sat) ** 4) ** 0.25
        a_1db = a_grid[int(np.argmin(np.abs(out - target_out)))]
        comp_db = 26.0 - 20 * np.log10(
            np.abs(pa_model(ComplexSequence(np.array([a_1db + 0j]), 1.0), 26.0, 24.0).iq[0]) / a_1db)
        assert comp_db == pytest.approx(1.0, abs=0.05)

    def test_phase_preserved(self):
        x = ComplexSequence(np.array([3 * np.exp(1j * 0.7)]), 1.0)
        out = pa_model(x, 20.0, 10.0)
        assert np.angle(out.iq[0]) == pytest.approx(0.7, abs=1e-12)


class TestPowerBudget:
    def test_paper_budget(self):
        cfg = ChainConfig()
        assert power_budget(cfg, 8.0) == pytest.approx(4.0)

    def test_zeros(self):
        cfg = ChainConfig(duplexer_attenuation_db=0.0, lna_gain_db=0.0)
        assert power_budget(cfg, 0.0) == 0.0

    def test_arithmetic(self):
        cfg = ChainConfig(duplexer_attenuation_db=40.0, lna_gain_db=20.0)
        assert power_budget(cfg, 10.0) == pytest.approx(-10.0)


class TestImd2Chain:
    def test_constant_envelope_gives_pure_noise(self):
        n = 1024
        t = np.arange(n)
        tone = ComplexSequence(0.1 * np.exp(2j * np.pi * 0.1 * t), 1.0)
        cfg = ChainConfig(memory_fir=(1.0,), noise_floor_db=None)
        ds = imd2_chain(tone, cfg)
        # constant |x|^2 means the whole IMD2 term is DC; after DC removal the
        # noiseless Rx is zero at machine precision relative to the DC level
        leak = 10 ** ((-cfg.duplexer_attenuation_db + cfg.lna_gain_db) / 20.0)
        dc_level = np.mean(np.abs(pa_model(tone, cfg.pa_gain_db, cfg.pa_p1db_dbm).iq * leak) ** 2)
        assert np.max(np.abs(ds.rx.samples)) <= 1e-12 * dc_level

    def test_noiseless_memoryless_affine_in_envelope(self):
        tx = gen_ofdm(OfdmConfig(n_subcarriers=64, n_symbols=4, cp_len=16, seed=1))
        cfg = ChainConfig(memory_fir=(1.0,), noise_floor_db=None)
        ds = imd2_chain(tx, cfg)
        env2 = np.abs(pa_model(tx, cfg.pa_gain_db, cfg.pa_p1db_dbm).iq) ** 2
        fit = np.polyfit(env2, ds.rx.samples, 1)
        resid = ds.rx.samples - np.polyval(fit, env2)
        assert np.max(np.abs(resid)) <= 1e-9 * np.max(np.abs(ds.rx.samples))

    def test_cheb_ls_fits_linear_pa_exactly(self):
        tx = gen_ofdm(OfdmConfig(n_subcarriers=64, n_symbols=8, cp_len=16, seed=2))
        cfg = ChainConfig(pa_p1db_dbm=200.0, memory_fir=(1.0,), noise_floor_db=None)
        ds = imd2_chain(tx, cfg)
        _, hist = train(ChebyshevModel(DelaySet((0,)), 3), ds, "ls")
        assert hist.final_nmse_db <= -100.0

    def test_noise_floor_sets_best_nmse(self):
        tx = gen_ofdm(OfdmConfig(seed=9))
        cfg = ChainConfig(pa_p1db_dbm=200.0, memory_fir=(1.0,), noise_floor_db=-30.0, seed=9)
        ds = imd2_chain(tx, cfg)
        _, hist = train(ChebyshevModel(DelaySet((0,)), 3), ds, "ls")
        assert hist.final_nmse_db == pytest.approx(-30.0, abs=0.5)

    def test_rx_zero_mean(self):
        tx = gen_ofdm(OfdmConfig(seed=10))
        ds = imd2_chain(tx, ChainConfig(seed=10))
        rms = np.sqrt(np.mean(ds.rx.samples ** 2))
        assert abs(np.mean(ds.rx.samples)) <= 1e-10 * rms

    def test_determinism(self):
        tx = gen_ofdm(OfdmConfig(seed=11))
        a = imd2_chain(tx, ChainConfig(seed=11))
        b = imd2_chain(tx, ChainConfig(seed=11))
        np.testing.assert_array_equal(a.rx.samples, b.rx.samples)

    def test_fir_normalized(self):
        cfg = ChainConfig(memory_fir=(2.0, 1.0, 1.0))
        assert sum(cfg.memory_fir) == pytest.approx(1.0)

    def test_pairs_original_tx(self):
        tx = gen_ofdm(OfdmConfig(seed=12))
        ds = imd2_chain(tx, ChainConfig(seed=12))
        np.testing.assert_array_equal(ds.tx.iq, tx.iq)


class TestConfigFile:
    def test_toml_round_trip(self, tmp_path):
        p = tmp_path / "chain.toml"
        p.write_text(
            "[ofdm]\nn_subcarriers = 128\nn_symbols = 4\ncp_len = 16\nseed = 7\n"
            "[chain]\nnoise_floor_db = -25.0\nmemory_fir = [1.0]\nseed = 7\n")
        ofdm, chain = load_chain_config(p)
        assert ofdm.n_subcarriers == 128
        assert chain.noise_floor_db == -25.0
        assert chain.memory_fir == (1.0,)

    def test_bad_field_rejected(self, tmp_path):
        p = tmp_path / "chain.toml"
        p.write_text("[ofdm]\nbogus_field = 1\n")
        with pytest.raises(SignalError):
            load_chain_config(p)

    def test_invalid_cp_rejected(self, tmp_path):
        p = tmp_path / "chain.toml"
        p.write_text("[ofdm]\nn_subcarriers = 64\ncp_len = 64\n")
        with pytest.raises(SignalError):
            load_chain_config(p)
