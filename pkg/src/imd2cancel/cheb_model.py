"""Chebyshev memory-polynomial canceller.

The model output is a sum over delay taps k and polynomial orders p of
theta[k, p] * T_p(|x_{n-d_k}|), with T_p the first-kind Chebyshev
polynomial evaluated by the three-term recurrence.  Inputs must be
magnitude-normalized to [0, 1] beforehand (see signal_core).
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .signal_core import DelaySet, SignalError

DOMAIN_SLACK = 1e-12


class DomainError(ValueError):
    """Basis input outside [0, 1]; signals missing normalization."""


@dataclass
class ChebyshevModel:
    delays: DelaySet
    order: int
    theta: np.ndarray = None  # K x P
    input_scale: float = 1.0

    def __post_init__(self):
        if self.order < 1:
            raise SignalError("order must be >= 1")
        if not (self.input_scale > 0):
            raise SignalError("input_scale must be positive")
        k = len(self.delays)
        if self.theta is None:
            self.theta = np.zeros((k, self.order))
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(k, self.order)
        if not np.all(np.isfinite(self.theta)):
            raise SignalError("non-finite theta entry")

    def param_count(self):
        return self.theta.size

    def flatten(self):
        return self.theta.ravel().copy()

    def with_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.param_count():
            raise SignalError(f"expected {self.param_count()} parameters, got {flat.size}")
        return ChebyshevModel(self.delays, self.order, flat.reshape(self.theta.shape), self.input_scale)

    def to_dict(self):
        return {
            "type": "chebyshev",
            "delays": list(self.delays.delays),
            "order": self.order,
            "input_scale": self.input_scale,
            "theta": self.theta.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("type") != "chebyshev":
            raise SignalError(f"not a chebyshev model: type={d.get('type')!r}")
        return cls(DelaySet(tuple(d["delays"])), int(d["order"]),
                   np.array(d["theta"]), float(d["input_scale"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _check_domain(u):
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0.0) or np.any(u > 1.0 + DOMAIN_SLACK):
        bad = u[(u < 0.0) | (u > 1.0 + DOMAIN_SLACK)]
        raise DomainError(f"basis input outside [0, 1]: {bad.flat[0]!r} (is the signal normalized?)")
    return np.minimum(u, 1.0)


def cheb_basis(u, order):
    """(T_0(u), ..., T_{order-1}(u)) by the three-term recurrence."""
    u = float(np.asarray(_check_domain(u)))
    out = np.empty(order)
    out[0] = 1.0
    if order > 1:
        out[1] = u
    for p in range(2, order):
        out[p] = 2.0 * u * out[p - 1] - out[p - 2]
    return out


def feature_matrix(embedded, order):
    """Chebyshev features of a delay-embedded matrix.

    Column ordering is delay-major, order-minor: (k=0,p=0..P-1, k=1,...).
    This ordering is part of the saved-model contract.
    """
    embedded = _check_domain(embedded)
    return kernels.cheb_features(np.atleast_2d(embedded), order)


def forward(model: ChebyshevModel, embedded_row):
    """Scalar model output for one embedded magnitude row."""
    feats = feature_matrix(np.asarray(embedded_row, dtype=np.float64).reshape(1, -1), model.order)
    return float(feats[0] @ model.flatten())


def gradient(model: ChebyshevModel, embedded_row):
    """d(output)/d(theta), which is just the feature row (linear model)."""
    feats = feature_matrix(np.asarray(embedded_row, dtype=np.float64).reshape(1, -1), model.order)
    return feats[0].copy()


def forward_batch(model: ChebyshevModel, embedded):
    feats = feature_matrix(embedded, model.order)
    return feats @ model.flatten()
