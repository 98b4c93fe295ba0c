"""Hot numeric kernels with optional numba acceleration.

Two implementations of each kernel exist: a pure-numpy one and a numba
``@njit`` one.  The active backend is chosen at import time from the
``IMD2_DISABLE_NUMBA`` environment variable (any non-empty value other
than "0" forces the numpy path) or automatically when numba is missing.
``benchmarks/bench_kernels.py`` compares the two.

Activation codes shared by both backends: 0 = tanh, 1 = relu, 2 = sigmoid.
"""

import os

import numpy as np

ACT_TANH = 0
ACT_RELU = 1
ACT_SIGMOID = 2

ACTIVATION_CODES = {"tanh": ACT_TANH, "relu": ACT_RELU, "sigmoid": ACT_SIGMOID}

_disable = os.environ.get("IMD2_DISABLE_NUMBA", "0") not in ("", "0")

try:
    if _disable:
        raise ImportError
    import numba

    NUMBA_ENABLED = True
except ImportError:
    numba = None
    NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# Chebyshev feature matrix: rows of T_0..T_{P-1} per delay column, k-major.
# ---------------------------------------------------------------------------

def _cheb_features_np(embedded, order):
    n, k = embedded.shape
    out = np.empty((n, k * order))
    for j in range(k):
        u = embedded[:, j]
        base = j * order
        out[:, base] = 1.0
        if order > 1:
            out[:, base + 1] = u
        for p in range(2, order):
            out[:, base + p] = 2.0 * u * out[:, base + p - 1] - out[:, base + p - 2]
    return out


if NUMBA_ENABLED:

    @numba.njit(cache=True)
    def _cheb_features_nb(embedded, order):  # pragma: no cover - numba
        n, k = embedded.shape
        out = np.empty((n, k * order))
        for i in range(n):
            for j in range(k):
                u = embedded[i, j]
                base = j * order
                out[i, base] = 1.0
                if order > 1:
                    out[i, base + 1] = u
                for p in range(2, order):
                    out[i, base + p] = 2.0 * u * out[i, base + p - 1] - out[i, base + p - 2]
        return out


def cheb_features(embedded, order):
    """Chebyshev basis expansion of a delay-embedded magnitude matrix.

    ``embedded`` is (n, K) with entries in [0, 1]; the result is
    (n, K*order) with column ordering delay-major, polynomial-order-minor.
    """
    embedded = np.ascontiguousarray(embedded, dtype=np.float64)
    if NUMBA_ENABLED:
        return _cheb_features_nb(embedded, order)
    return _cheb_features_np(embedded, order)


# ---------------------------------------------------------------------------
# Bias-free feed-forward network: batched forward pass and mean-gradient
# backward pass over a flat sample batch.
# ---------------------------------------------------------------------------

def _activate_np(z, act):
    if act == ACT_TANH:
        return np.tanh(z)
    if act == ACT_RELU:
        return np.maximum(z, 0.0)
    return 1.0 / (1.0 + np.exp(-z))


def _activate_grad_np(z, act):
    if act == ACT_TANH:
        t = np.tanh(z)
        return 1.0 - t * t
    if act == ACT_RELU:
        return (z > 0.0).astype(np.float64)
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 - s)


def _nn_loss_grad_np(features, targets, weights, act):
    m = features.shape[0]
    n_hidden = len(weights) - 1
    acts = [features]
    pres = []
    a = features
    for j in range(n_hidden):
        z = a @ weights[j].T
        pres.append(z)
        a = _activate_np(z, act)
        acts.append(a)
    y = a @ weights[-1].T
    y = y[:, 0]
    resid = y - targets
    loss = np.mean(resid * resid)

    grads = [np.empty_like(w) for w in weights]
    dy = (2.0 / m) * resid
    grads[-1][0, :] = dy @ acts[-1]
    delta = np.outer(dy, weights[-1][0, :])
    for j in range(n_hidden - 1, -1, -1):
        delta = delta * _activate_grad_np(pres[j], act)
        grads[j][:, :] = delta.T @ acts[j]
        if j > 0:
            delta = delta @ weights[j]
    return loss, grads, y


if NUMBA_ENABLED:

    @numba.njit(cache=True)
    def _nn_loss_grad_flat_nb(features, targets, flat, dims, act):  # pragma: no cover - numba
        m = features.shape[0]
        n_layers = dims.shape[0]
        offs = np.zeros(n_layers + 1, np.int64)
        for j in range(n_layers):
            offs[j + 1] = offs[j] + dims[j, 0] * dims[j, 1]

        acts = [features]
        pres = []
        a = features
        for j in range(n_layers - 1):
            w = flat[offs[j] : offs[j + 1]].reshape(dims[j, 0], dims[j, 1])
            z = np.dot(a, w.T.copy())
            pres.append(z)
            if act == ACT_TANH:
                a = np.tanh(z)
            elif act == ACT_RELU:
                a = np.maximum(z, 0.0)
            else:
                a = 1.0 / (1.0 + np.exp(-z))
            acts.append(a)
        w_out = flat[offs[n_layers - 1] : offs[n_layers]]
        y = np.dot(a, w_out)
        resid = y - targets
        loss = 0.0
        for i in range(m):
            loss += resid[i] * resid[i]
        loss /= m

        gflat = np.empty_like(flat)
        dy = (2.0 / m) * resid
        gflat[offs[n_layers - 1] : offs[n_layers]] = np.dot(dy, acts[n_layers - 1])
        delta = np.outer(dy, w_out)
        for j in range(n_layers - 2, -1, -1):
            z = pres[j]
            if act == ACT_TANH:
                t = np.tanh(z)
                dact = 1.0 - t * t
            elif act == ACT_RELU:
                dact = (z > 0.0).astype(np.float64)
            else:
                s = 1.0 / (1.0 + np.exp(-z))
                dact = s * (1.0 - s)
            delta = delta * dact
            gw = np.dot(delta.T, np.ascontiguousarray(acts[j]))
            gflat[offs[j] : offs[j + 1]] = gw.ravel()
            if j > 0:
                w = flat[offs[j] : offs[j + 1]].reshape(dims[j, 0], dims[j, 1])
                delta = np.dot(delta, w)
        return loss, gflat, y


def _split_flat(flat, dims):
    ws = []
    pos = 0
    for rows, cols in dims:
        ws.append(flat[pos : pos + rows * cols].reshape(rows, cols))
        pos += rows * cols
    return ws


def nn_loss_grad_flat(features, targets, flat, dims, activation):
    """Like :func:`nn_loss_grad` but over a flat parameter vector.

    ``dims`` is an (n_layers, 2) int array of per-layer (rows, cols); the
    gradient comes back as one flat vector in the same layout.  This is the
    training hot path: no per-call weight-object construction.
    """
    act = ACTIVATION_CODES[activation] if isinstance(activation, str) else activation
    flat = np.ascontiguousarray(flat, dtype=np.float64)
    if NUMBA_ENABLED:
        return _nn_loss_grad_flat_nb(features, targets, flat,
                                     np.asarray(dims, dtype=np.int64), act)
    loss, grads, y = _nn_loss_grad_np(features, targets, _split_flat(flat, dims), act)
    return loss, np.concatenate([g.ravel() for g in grads]), y


def nn_loss_grad(features, targets, weights, activation):
    """Mean-squared-error loss, per-matrix gradients, and outputs of a
    bias-free dense network over a sample batch.

    ``weights`` is the layer list [W_0, ..., W_{L-1}, w_out]; gradients come
    back in the same layer order.  Gradient of the batch loss is the mean of
    per-sample gradients.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    dims = np.array([w.shape for w in weights], dtype=np.int64)
    flat = np.concatenate([np.asarray(w, dtype=np.float64).ravel() for w in weights])
    loss, gflat, y = nn_loss_grad_flat(features, targets, flat, dims, activation)
    return loss, _split_flat(gflat, dims), y


def nn_forward_batch(features, weights, activation):
    """Network outputs for a batch, without gradients."""
    act = ACTIVATION_CODES[activation] if isinstance(activation, str) else activation
    a = np.ascontiguousarray(features, dtype=np.float64)
    for w in weights[:-1]:
        a = _activate_np(a @ w.T, act)
    return (a @ weights[-1].T)[:, 0]


def warmup():
    """Trigger JIT compilation of the numba kernels (no-op on numpy path)."""
    if not NUMBA_ENABLED:
        return
    emb = np.linspace(0.0, 1.0, 8).reshape(4, 2)
    cheb_features(emb, 3)
    w = [np.ones((2, 2)), np.ones((1, 2))]
    nn_loss_grad(emb, np.zeros(4), w, "tanh")
