"""Synthetic baseband-equivalent FDD transceiver chain.

Generates (Tx, Rx) datasets whose Rx contains IMD2 interference: the Tx
signal passes a Rapp-model PA, leaks through the duplexer stopband into
the LNA, and its squared envelope (optionally FIR-filtered for memory)
appears at baseband after the second-order mixer nonlinearity.  Noise is
injected at a configurable level relative to the IMD2 power, so the best
achievable NMSE of a matched canceller is known by construction.

Amplitude convention: |x|^2 is power in mW, i.e. dBm = 10*log10(|x|^2).
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .signal_core import ComplexSequence, Dataset, RealSequence, SignalError

RAPP_SMOOTHNESS = 2


@dataclass
class OfdmConfig:
    n_subcarriers: int = 256
    n_symbols: int = 16
    cp_len: int = 32
    bandwidth_hz: float = 5e6
    tx_power_dbm: float = -18.0
    seed: int = 0

    def __post_init__(self):
        if self.n_subcarriers < 2 or self.n_subcarriers & (self.n_subcarriers - 1):
            raise SignalError("n_subcarriers must be a power of two")
        if not (0 <= self.cp_len < self.n_subcarriers):
            raise SignalError("cp_len must be < n_subcarriers")
        if self.n_symbols < 1:
            raise SignalError("n_symbols must be >= 1")
        if not (self.bandwidth_hz > 0):
            raise SignalError("bandwidth_hz must be positive")


@dataclass
class ChainConfig:
    pa_gain_db: float = 26.0
    pa_p1db_dbm: float = 24.0
    duplexer_attenuation_db: float = 30.0
    lna_gain_db: float = 26.0
    imd2_coeff: float = 1.0
    memory_fir: tuple = (0.8, 0.15, 0.05)
    noise_floor_db: float = -30.0  # relative to IMD2 AC power; None = noiseless
    seed: int = 0
    # metadata only; baseband-equivalent simulation never mixes to RF
    f_tx_hz: float = 814e6
    f_rx_hz: float = 859e6

    def __post_init__(self):
        fir = np.asarray(self.memory_fir, dtype=np.float64)
        if fir.size == 0:
            raise SignalError("memory_fir must be nonempty")
        if not np.all(np.isfinite(fir)):
            raise SignalError("non-finite FIR tap")
        s = fir.sum()
        if s == 0:
            raise SignalError("memory_fir taps sum to zero")
        self.memory_fir = tuple(fir / s)
        for name in ("pa_gain_db", "pa_p1db_dbm", "duplexer_attenuation_db", "lna_gain_db"):
            if not np.isfinite(getattr(self, name)):
                raise SignalError(f"{name} must be finite")


def gen_ofdm(cfg: OfdmConfig) -> ComplexSequence:
    """QPSK-loaded OFDM waveform with cyclic prefix, scaled to tx_power_dbm."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_subcarriers
    qpsk = (rng.integers(0, 2, size=(cfg.n_symbols, n)) * 2 - 1
            + 1j * (rng.integers(0, 2, size=(cfg.n_symbols, n)) * 2 - 1)) / np.sqrt(2.0)
    # ifft * sqrt(N) keeps unit average sample power for unit symbol power
    time_syms = np.fft.ifft(qpsk, axis=1) * np.sqrt(n)
    with_cp = np.concatenate([time_syms[:, n - cfg.cp_len :], time_syms], axis=1)
    x = with_cp.ravel()
    target_power = 10.0 ** (cfg.tx_power_dbm / 10.0)
    x *= np.sqrt(target_power / np.mean(np.abs(x) ** 2))
    return ComplexSequence(x, cfg.bandwidth_hz)


def rapp_saturation(gain_db, p1db_dbm):
    """Saturation amplitude of the Rapp model calibrated to the 1 dB
    compression point (smoothness 2)."""
    out_1db = 10.0 ** (p1db_dbm / 20.0)
    c = (10.0 ** 0.2 - 1.0) ** (1.0 / (2 * RAPP_SMOOTHNESS))
    return out_1db * 10.0 ** 0.05 / c


def pa_model(x: ComplexSequence, gain_db, p1db_dbm) -> ComplexSequence:
    """Rapp AM/AM power-amplifier model, phase preserved."""
    g = 10.0 ** (gain_db / 20.0)
    x_sat = rapp_saturation(gain_db, p1db_dbm)
    a = np.abs(x.iq)
    comp = (1.0 + (g * a / x_sat) ** (2 * RAPP_SMOOTHNESS)) ** (1.0 / (2 * RAPP_SMOOTHNESS))
    return ComplexSequence(g * x.iq / comp, x.sample_rate_hz)


def power_budget(cfg: ChainConfig, p_tx_dbm):
    """Leakage power at the mixer input in dBm."""
    return p_tx_dbm - cfg.duplexer_attenuation_db + cfg.lna_gain_db


def imd2_chain(tx: ComplexSequence, cfg: ChainConfig) -> Dataset:
    """Run the Tx signal through the chain and pair it with the Rx capture.

    Pipeline: PA -> duplexer stopband -> LNA -> squared envelope filtered by
    memory_fir, scaled by imd2_coeff -> DC removal -> additive white noise at
    noise_floor_db relative to the IMD2 AC power.  The dataset pairs the
    ORIGINAL baseband Tx with this Rx, as the canceller only sees BB Tx.
    """
    pa_out = pa_model(tx, cfg.pa_gain_db, cfg.pa_p1db_dbm)
    leak_scale = 10.0 ** ((-cfg.duplexer_attenuation_db + cfg.lna_gain_db) / 20.0)
    env2 = np.abs(pa_out.iq * leak_scale) ** 2
    fir = np.asarray(cfg.memory_fir)
    imd2 = cfg.imd2_coeff * np.convolve(env2, fir)[: len(env2)]
    imd2 = imd2 - imd2.mean()
    ac_power = float(np.mean(imd2 * imd2))
    rx = imd2
    if cfg.noise_floor_db is not None:
        rng = np.random.default_rng(cfg.seed)
        sigma = np.sqrt(ac_power * 10.0 ** (cfg.noise_floor_db / 10.0))
        rx = imd2 + rng.normal(0.0, sigma, size=len(imd2))
    rx = rx - rx.mean()
    return Dataset(tx, RealSequence(rx, tx.sample_rate_hz))


def load_chain_config(path):
    """Read a chain.toml / chain.json file with [ofdm] and [chain] tables."""
    text = open(path, "rb").read()
    if str(path).endswith(".json"):
        raw = json.loads(text)
    else:
        import tomli

        raw = tomli.loads(text.decode())
    try:
        ofdm = OfdmConfig(**raw.get("ofdm", {}))
        chain_raw = dict(raw.get("chain", {}))
        if "memory_fir" in chain_raw:
            chain_raw["memory_fir"] = tuple(chain_raw["memory_fir"])
        chain = ChainConfig(**chain_raw)
    except TypeError as e:
        raise SignalError(f"{path}: invalid config: {e}") from None
    return ofdm, chain


def resolved_config_dict(ofdm: OfdmConfig, chain: ChainConfig):
    d = {"ofdm": asdict(ofdm), "chain": asdict(chain)}
    d["chain"]["memory_fir"] = list(d["chain"]["memory_fir"])
    return d
