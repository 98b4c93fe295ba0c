"""Fitting procedures: closed-form regularized least squares, Adam, and
limited-memory BFGS with strong Wolfe line search.

All iterative optimizers work on a flat parameter vector through a
(loss, grad) callback; one iteration is one full-batch gradient step.
"""

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import cheb_model as cm
from . import nn_model as nm
from .signal_core import SignalError, delay_embed, normalize_magnitude


class OptimError(RuntimeError):
    pass


class RankDeficiencyError(OptimError):
    """Singular normal equations; retry with lambda > 0."""


class LineSearchError(OptimError):
    pass


class NonFiniteLossError(OptimError):
    pass


class UnsupportedCombinationError(OptimError):
    """Model/optimizer pairing that has no defined fit (e.g. NN + LS)."""


@dataclass
class LossProblem:
    eval: callable  # theta -> (loss, grad)
    dim: int


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------

def ls_solve(A, b, lam=0.0):
    """Solve the regularized normal equations (A^T A + lam I) theta = A^T b."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if lam < 0:
        raise SignalError("lambda must be >= 0")
    gram = A.T @ A
    rhs = A.T @ b
    n = gram.shape[0]
    if lam > 0:
        gram = gram + lam * np.eye(n)
    try:
        theta = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(
            "normal equations are singular; retry with lambda > 0") from None
    resid = np.linalg.norm(gram @ theta - rhs)
    ref = np.linalg.norm(rhs)
    if ref > 0 and resid > 1e-8 * max(ref, 1.0) * 10:
        raise RankDeficiencyError(
            f"ill-conditioned normal equations (relative residual {resid / ref:.2e}); "
            "retry with lambda > 0")
    return theta


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    k: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, dim, alpha=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(np.zeros(dim), np.zeros(dim), 0, alpha, beta1, beta2, eps)


def adam_step(state: AdamState, theta, grad):
    """One Adam update with bias correction; returns (new theta, new state)."""
    g = np.asarray(grad, dtype=np.float64)
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    k = state.k + 1
    m_hat = m / (1.0 - state.beta1 ** k)
    v_hat = v / (1.0 - state.beta2 ** k)
    theta_new = theta - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)
    return theta_new, AdamState(m, v, k, state.alpha, state.beta1, state.beta2, state.eps)


# ---------------------------------------------------------------------------
# L-BFGS
# ---------------------------------------------------------------------------

CURVATURE_REL_TOL = 1e-10


@dataclass
class LbfgsState:
    memory: deque  # of (delta, gamma) pairs
    k: int = 0

    @classmethod
    def fresh(cls, depth=100):
        return cls(deque(maxlen=depth), 0)


def two_loop_direction(grad, pairs):
    """Search direction -H grad via the standard two-loop recursion.

    Initial Hessian scaling is <delta, gamma>/<gamma, gamma> of the most
    recent stored pair, identity when the memory is empty.
    """
    q = -np.asarray(grad, dtype=np.float64).copy()
    if not pairs:
        return q
    alphas = []
    rhos = []
    for delta, gamma in reversed(pairs):
        rho = 1.0 / np.dot(delta, gamma)
        a = rho * np.dot(delta, q)
        q -= a * gamma
        alphas.append(a)
        rhos.append(rho)
    d_last, g_last = pairs[-1]
    q *= np.dot(d_last, g_last) / np.dot(g_last, g_last)
    for (delta, gamma), a, rho in zip(pairs, reversed(alphas), reversed(rhos)):
        b = rho * np.dot(gamma, q)
        q += (a - b) * delta
    return q


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic Hermite interpolant; None when undefined.

    Exact for quadratic phi, which lets the surrounding search land on the
    true 1-D minimizer of quadratic objectives.
    """
    if a == b:
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0.0:
        return None
    d2 = np.sqrt(disc) * np.sign(b - a)
    denom = db - da + 2.0 * d2
    if denom == 0.0:
        return None
    x = b - (b - a) * (db + d2 - d1) / denom
    return x if np.isfinite(x) else None


def line_search(problem: LossProblem, theta, direction, initial_h=1.0,
                c1=1e-4, c2=0.9, max_evals=50):
    """Strong-Wolfe step length along ``direction`` (bracket + zoom with
    cubic interpolation, then a short polish toward phi'(h) = 0)."""
    theta = np.asarray(theta, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    evals = [0]

    def phi(h):
        evals[0] += 1
        if evals[0] > max_evals:
            raise LineSearchError(f"line search exceeded {max_evals} evaluations")
        f, g = problem.eval(theta + h * direction)
        return f, float(np.dot(g, direction))

    f0, d0 = phi(0.0)
    if d0 >= 0.0:
        raise LineSearchError(f"not a descent direction (directional derivative {d0:.3e})")

    def sufficient(h, f):
        return f <= f0 + c1 * h * d0

    def polish(h, f, d):
        # refine toward the exact ray minimizer while Wolfe still holds;
        # one cubic step is exact on quadratics
        h2, f2, d2 = h, f, d
        lo, flo, dlo = 0.0, f0, d0
        for _ in range(6):
            if abs(d2) <= 1e-10 * abs(d0) or evals[0] >= max_evals - 1:
                break
            trial = _cubic_min(lo, flo, dlo, h2, f2, d2)
            if trial is None or trial <= 0.0 or not np.isfinite(trial):
                break
            try:
                ft, dt = phi(trial)
            except LineSearchError:
                break
            if sufficient(trial, ft) and abs(dt) <= abs(d2):
                lo, flo, dlo = (h2, f2, d2) if trial < h2 else (lo, flo, dlo)
                h2, f2, d2 = trial, ft, dt
            else:
                break
        return h2

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        for _ in range(max_evals):
            h = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            span = abs(hi - lo)
            if (h is None or not (min(lo, hi) + 0.01 * span <= h <= max(lo, hi) - 0.01 * span)):
                h = 0.5 * (lo + hi)
            f, d = phi(h)
            if not sufficient(h, f) or f >= f_lo:
                hi, f_hi, d_hi = h, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return polish(h, f, d)
                if d * (hi - lo) >= 0.0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = h, f, d
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                return lo
        raise LineSearchError("zoom failed to satisfy Wolfe conditions")

    h_prev, f_prev, d_prev = 0.0, f0, d0
    h = initial_h
    for _ in range(max_evals):
        f, d = phi(h)
        if not sufficient(h, f) or (h_prev > 0.0 and f >= f_prev):
            return zoom(h_prev, f_prev, d_prev, h, f, d)
        if abs(d) <= -c2 * d0:
            return polish(h, f, d)
        if d >= 0.0:
            return zoom(h, f, d, h_prev, f_prev, d_prev)
        h_prev, f_prev, d_prev = h, f, d
        h *= 2.0
    raise LineSearchError("bracketing failed to find a Wolfe step")


def lbfgs_step(state: LbfgsState, problem: LossProblem, theta):
    """One L-BFGS iteration; returns (new theta, new state, accepted).

    ``accepted`` is False only when the line search fails twice (once along
    the quasi-Newton direction, once after a steepest-descent reset), which
    signals convergence or a stuck point.
    """
    theta = np.asarray(theta, dtype=np.float64)
    f, g = problem.eval(theta)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteLossError(f"non-finite loss/gradient at iteration {state.k}")

    pairs = list(state.memory)
    direction = two_loop_direction(g, pairs)
    if np.dot(direction, g) >= 0.0:
        direction = -g
        pairs = []

    initial_h = 1.0 if pairs else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-12))
    try:
        h = line_search(problem, theta, direction, initial_h)
    except LineSearchError:
        if pairs:
            direction = -g
            try:
                h = line_search(problem, theta, direction,
                                min(1.0, 1.0 / max(np.linalg.norm(g), 1e-12)))
                pairs = []
            except LineSearchError:
                return theta, LbfgsState(state.memory, state.k + 1), False
        else:
            return theta, LbfgsState(state.memory, state.k + 1), False

    theta_new = theta + h * direction
    _, g_new = problem.eval(theta_new)
    delta = theta_new - theta
    gamma = g_new - g
    memory = deque(pairs, maxlen=state.memory.maxlen)
    curv = np.dot(delta, gamma)
    if curv > CURVATURE_REL_TOL * np.linalg.norm(delta) * np.linalg.norm(gamma):
        memory.append((delta, gamma))
    return theta_new, LbfgsState(memory, state.k + 1), True


# ---------------------------------------------------------------------------
# Training driver
# ---------------------------------------------------------------------------

@dataclass
class OptimConfig:
    method: str = "ls"  # ls | adam | lbfgs
    max_iters: int = 1000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lbfgs_memory: int = 100
    grad_tol: float = 0.0
    log_every: int = 1
    seed: int = 0
    lam: float = 0.0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise SignalError(f"unknown optimizer config keys: {sorted(extra)}")
        return cls(**d)


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)  # {iter, loss, nmse_db, wall_time}

    def append(self, it, loss, nmse_db, wall_time):
        if self.records and it <= self.records[-1]["iter"]:
            raise SignalError("iterations must be strictly increasing")
        self.records.append(
            {"iter": int(it), "loss": float(loss), "nmse_db": float(nmse_db),
             "wall_time": float(wall_time)})

    def nmse_at(self, it):
        """NMSE of the last record at or before iteration ``it``."""
        best = None
        for r in self.records:
            if r["iter"] <= it:
                best = r
        if best is None:
            raise SignalError(f"no history at iteration {it}")
        return best["nmse_db"]

    @property
    def final_nmse_db(self):
        return self.records[-1]["nmse_db"]


def _residual_nmse_db(loss, target_power_mean):
    if target_power_mean <= 0:
        raise SignalError("all-zero training target")
    if loss < 1e-300:
        return float("-inf")
    return 10.0 * np.log10(loss / target_power_mean)


def prepare_training_data(model, dataset):
    """Normalize the Tx signal, stamp the scale on the model, and build the
    delay-embedded inputs with aligned targets."""
    tx_norm, scale = normalize_magnitude(dataset.tx)
    model.input_scale = scale
    embedded = delay_embed(tx_norm, model.delays)
    targets = dataset.rx.samples[model.delays.max_delay :]
    return embedded, targets


def train(model, dataset, method, config: OptimConfig = None):
    """Fit ``model`` (ChebyshevModel or NNModel) on ``dataset``.

    Returns (fitted model, TrainHistory).  LS is only defined for the
    Chebyshev model, which is linear in its parameters.
    """
    config = config or OptimConfig(method=method)
    is_cheb = isinstance(model, cm.ChebyshevModel)
    if method == "ls" and not is_cheb:
        raise UnsupportedCombinationError(
            "least squares requires a linear-in-parameters model; "
            "the NN canceller must be trained with adam or lbfgs")
    if method not in ("ls", "adam", "lbfgs"):
        raise SignalError(f"unknown optimizer {method!r}")

    embedded, targets = prepare_training_data(model, dataset)
    m = len(targets)
    target_power = float(np.dot(targets, targets) / m)
    t0 = time.perf_counter()
    history = TrainHistory()

    if is_cheb:
        feats = cm.feature_matrix(embedded, model.order)

        def evaluate(theta):
            r = feats @ theta - targets
            loss = float(np.dot(r, r) / m)
            grad = (2.0 / m) * (feats.T @ r)
            return loss, grad

        dim = feats.shape[1]
        theta0 = model.flatten()
    else:
        from . import kernels

        feats_c = np.ascontiguousarray(embedded)
        targets_c = np.ascontiguousarray(targets)
        dims = np.array([w.shape for w in model.layer_weights], dtype=np.int64)
        act = model.activation

        def evaluate(theta):
            loss, grad, _ = kernels.nn_loss_grad_flat(feats_c, targets_c, theta, dims, act)
            return loss, grad

        dim = model.param_count()
        theta0 = model.flatten()

    problem = LossProblem(evaluate, dim)

    if method == "ls":
        theta = ls_solve(feats, targets, config.lam)
        loss, _ = evaluate(theta)
        history.append(1, loss, _residual_nmse_db(loss, target_power),
                       time.perf_counter() - t0)
        return model.with_params(theta), history

    theta = theta0
    if method == "adam":
        state = AdamState.fresh(dim, config.lr, config.beta1, config.beta2, config.eps)
        for it in range(1, config.max_iters + 1):
            loss, grad = evaluate(theta)
            if not np.isfinite(loss):
                err = NonFiniteLossError(f"non-finite loss at iteration {it}")
                err.history = history
                raise err
            theta, state = adam_step(state, theta, grad)
            if it % config.log_every == 0 or it == config.max_iters:
                post_loss, _ = evaluate(theta)
                history.append(it, post_loss,
                               _residual_nmse_db(post_loss, target_power),
                               time.perf_counter() - t0)
            if np.linalg.norm(grad) <= config.grad_tol:
                break
    else:
        state = LbfgsState.fresh(config.lbfgs_memory)
        for it in range(1, config.max_iters + 1):
            theta, state, accepted = lbfgs_step(state, problem, theta)
            loss, grad = evaluate(theta)
            if it % config.log_every == 0 or it == config.max_iters or not accepted:
                history.append(it, loss, _residual_nmse_db(loss, target_power),
                               time.perf_counter() - t0)
            if not accepted or np.linalg.norm(grad) <= config.grad_tol:
                break

    return model.with_params(theta), history
