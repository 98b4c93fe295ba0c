"""Behavioral IMD2 cancellation: Chebyshev memory-polynomial and small
feed-forward NN cancellers, fitted by LS / Adam / L-BFGS on synthetic
FDD transceiver-chain data."""

from .signal_core import (ComplexSequence, RealSequence, DelaySet, Dataset,
                          delay_embed, normalize_magnitude, load_dataset)
from .cheb_model import ChebyshevModel, cheb_basis, feature_matrix
from .nn_model import NNModel, init_weights
from .optim import (OptimConfig, TrainHistory, ls_solve, adam_step, AdamState,
                    lbfgs_step, LbfgsState, line_search, train,
                    UnsupportedCombinationError)
from .metrics import mse_loss, nmse, psd_welch, NmseReport, PsdEstimate
from .chain_sim import OfdmConfig, ChainConfig, gen_ofdm, pa_model, imd2_chain, power_budget

__version__ = "0.1.0"
