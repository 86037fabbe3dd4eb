"""Differentiable one-class anomaly scorer with hand-rolled gradients.

The scorer is an MLP feature map phi pulled toward a frozen center c:
score(x) = ||phi(x) - c||^2, with the opposing loss 1/(score + eps) for
anomalies. Hidden layers carry a learnable per-unit affine (scale/shift)
in place of batch normalization, so there is no train/eval statefulness.
Optimization is Adam with beta1=0.9, beta2=0.999 and no weight decay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataValidationError, NumericalError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
SCORE_EPSILON = 1e-6
DEFAULT_HIDDEN_DIMS = (64, 32)
DEFAULT_EMBED_DIM = 16
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class LossPair:
    """Normal-pull loss l0 and its anomaly-push counterpart l1 = 1/(l0+eps)."""

    l0: float
    l1: float


class ScorerState:
    """Parameters, frozen center, and Adam moments of one scorer.

    Only `adam_step` mutates a state; scoring and embedding are pure reads.
    """

    def __init__(self, input_dim, hidden_dims, embed_dim, params, center,
                 epsilon=SCORE_EPSILON):
        self.input_dim = int(input_dim)
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.embed_dim = int(embed_dim)
        self.params = params
        self.center = np.asarray(center, dtype=np.float64)
        self.epsilon = float(epsilon)
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.step_count = 0

    def copy(self) -> "ScorerState":
        dup = ScorerState(
            self.input_dim, self.hidden_dims, self.embed_dim,
            [p.copy() for p in self.params], self.center.copy(), self.epsilon,
        )
        dup.m = [m.copy() for m in self.m]
        dup.v = [v.copy() for v in self.v]
        dup.step_count = self.step_count
        return dup


def _param_shapes(input_dim, hidden_dims, embed_dim):
    shapes = []
    fan_in = input_dim
    for h in hidden_dims:
        shapes += [(h, fan_in), (h,), (h,), (h,)]  # W, b, gamma, beta
        fan_in = h
    shapes += [(embed_dim, fan_in), (embed_dim,)]
    return shapes


def init_scorer(
    input_dim: int,
    hidden_dims=DEFAULT_HIDDEN_DIMS,
    embed_dim: int = DEFAULT_EMBED_DIM,
    seed: int = 0,
    warmup_batch: np.ndarray | None = None,
) -> ScorerState:
    """Seeded init; the center is the mean warmup embedding, then frozen.

    Center coordinates with magnitude below 0.1 are pushed to +/-0.1
    (sign-preserving) to rule out the trivial collapsed solution.
    """
    if input_dim < 1 or embed_dim < 1 or any(h < 1 for h in hidden_dims):
        raise DataValidationError("all dimensions must be >= 1")
    warmup = np.atleast_2d(np.asarray(warmup_batch, dtype=np.float64)) \
        if warmup_batch is not None else None
    if warmup is None or warmup.size == 0:
        raise DataValidationError("warmup_batch must be non-empty")
    if warmup.shape[1] != input_dim:
        raise DataValidationError(
            f"warmup rows have width {warmup.shape[1]}, expected {input_dim}"
        )

    rng = np.random.default_rng(seed)
    params = []
    fan_in = input_dim
    for h in hidden_dims:
        params.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(h, fan_in)))
        params.append(np.zeros(h))
        params.append(np.ones(h))
        params.append(np.zeros(h))
        fan_in = h
    params.append(rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(embed_dim, fan_in)))
    params.append(np.zeros(embed_dim))

    state = ScorerState(input_dim, hidden_dims, embed_dim, params,
                        np.zeros(embed_dim))
    center = _forward(state, warmup)[0].mean(axis=0)
    small = np.abs(center) < 0.1
    center[small] = np.where(center[small] >= 0.0, 0.1, -0.1)
    state.center = center
    return state


def _forward(state: ScorerState, X: np.ndarray, want_cache: bool = False):
    """Forward pass; cache holds (layer input, preactivation, affine out) per layer."""
    cache = []
    out = X
    idx = 0
    for _ in state.hidden_dims:
        W, b, gamma, beta = state.params[idx: idx + 4]
        idx += 4
        a = out @ W.T + b
        z = gamma * a + beta
        nxt = np.maximum(z, 0.0)
        if want_cache:
            cache.append((out, a, z))
        out = nxt
    W_out, b_out = state.params[idx], state.params[idx + 1]
    phi = out @ W_out.T + b_out
    if want_cache:
        cache.append((out, None, None))
    return phi, cache


def _check_row(state, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != state.input_dim:
        raise DataValidationError(
            f"expected a length-{state.input_dim} feature row, got shape {x.shape}"
        )
    return x


def embed(state: ScorerState, x: np.ndarray) -> np.ndarray:
    """phi(x) for a single feature row."""
    return _forward(state, _check_row(state, x)[None, :])[0][0]


def embed_batch(state: ScorerState, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != state.input_dim:
        raise DataValidationError(f"expected (n, {state.input_dim}) batch, got {X.shape}")
    return _forward(state, X)[0]


def score_batch(state: ScorerState, X: np.ndarray) -> np.ndarray:
    diff = embed_batch(state, X) - state.center
    return np.einsum("ij,ij->i", diff, diff)


def score(state: ScorerState, x: np.ndarray) -> float:
    """Anomaly score ||phi(x) - c||^2 (higher = more anomalous)."""
    return float(score_batch(state, _check_row(state, x)[None, :])[0])


def loss_pair(state: ScorerState, x: np.ndarray) -> LossPair:
    l0 = score(state, x)
    return LossPair(l0=l0, l1=1.0 / (l0 + state.epsilon))


def loss_gaps(state: ScorerState, X: np.ndarray) -> np.ndarray:
    """Per-row l0 - l1, the ranking statistic for pseudo-label assignment."""
    l0 = score_batch(state, X)
    return l0 - 1.0 / (l0 + state.epsilon)


def weighted_loss_grad(state: ScorerState, batch, labels, weights):
    """Loss sum_i w_i (y_i*l1_i + (1-y_i)*l0_i) and its exact parameter gradient.

    Labels may be fractional (soft pseudo-labels). The center is a constant.
    """
    X = np.asarray(batch, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DataValidationError("batch must be a non-empty 2-D array")
    if X.shape[1] != state.input_dim:
        raise DataValidationError(f"batch width {X.shape[1]} != input_dim {state.input_dim}")
    if y.shape != (X.shape[0],) or w.shape != (X.shape[0],):
        raise DataValidationError("labels and weights must match the batch length")

    phi, cache = _forward(state, X, want_cache=True)
    diff = phi - state.center
    l0 = np.einsum("ij,ij->i", diff, diff)
    l1 = 1.0 / (l0 + state.epsilon)
    loss = float(np.sum(w * (y * l1 + (1.0 - y) * l0)))

    # d loss / d l0_i ; then chain through phi and the MLP.
    dl0 = w * ((1.0 - y) - y * l1 * l1)
    dphi = 2.0 * dl0[:, None] * diff

    grads = [None] * len(state.params)
    idx = len(state.params) - 2
    layer_in = cache[-1][0]
    grads[idx] = dphi.T @ layer_in          # W_out
    grads[idx + 1] = dphi.sum(axis=0)       # b_out
    dX = dphi @ state.params[idx]

    for layer in range(len(state.hidden_dims) - 1, -1, -1):
        base = layer * 4
        W, _b, gamma, _beta = state.params[base: base + 4]
        x_in, a, z = cache[layer]
        dz = dX * (z > 0.0)
        grads[base + 2] = (dz * a).sum(axis=0)   # gamma
        grads[base + 3] = dz.sum(axis=0)         # beta
        da = dz * gamma
        grads[base] = da.T @ x_in                # W
        grads[base + 1] = da.sum(axis=0)         # b
        dX = da @ W

    return loss, grads


def adam_step(state: ScorerState, grads, learning_rate: float) -> ScorerState:
    """Bias-corrected Adam update in place; the center is never touched."""
    if len(grads) != len(state.params):
        raise DataValidationError("gradient list does not match parameter list")
    for g, p in zip(grads, state.params):
        if g.shape != p.shape:
            raise DataValidationError(f"gradient shape {g.shape} != param {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient entry; step aborted")
    t = state.step_count + 1
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for p, g, m, v in zip(state.params, grads, state.m, state.v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= learning_rate * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    state.step_count = t
    return state


def state_to_dict(state: ScorerState) -> dict:
    return {
        "version": SNAPSHOT_VERSION,
        "input_dim": state.input_dim,
        "hidden_dims": list(state.hidden_dims),
        "embed_dim": state.embed_dim,
        "epsilon": state.epsilon,
        "params": [p.tolist() for p in state.params],
        "center": state.center.tolist(),
        "m": [m.tolist() for m in state.m],
        "v": [v.tolist() for v in state.v],
        "step_count": state.step_count,
    }


def state_from_dict(blob: dict) -> ScorerState:
    if blob.get("version") != SNAPSHOT_VERSION:
        raise DataValidationError(f"unsupported snapshot version {blob.get('version')}")
    shapes = _param_shapes(blob["input_dim"], blob["hidden_dims"], blob["embed_dim"])
    params = [np.asarray(p, dtype=np.float64) for p in blob["params"]]
    if [p.shape for p in params] != shapes:
        raise DataValidationError("snapshot parameter shapes do not match header")
    state = ScorerState(
        blob["input_dim"], blob["hidden_dims"], blob["embed_dim"],
        params, np.asarray(blob["center"], dtype=np.float64), blob["epsilon"],
    )
    state.m = [np.asarray(m, dtype=np.float64) for m in blob["m"]]
    state.v = [np.asarray(v, dtype=np.float64) for v in blob["v"]]
    state.step_count = int(blob["step_count"])
    return state


def save_state(state: ScorerState, path: str | Path) -> None:
    Path(path).write_text(json.dumps(state_to_dict(state)))


def load_state(path: str | Path) -> ScorerState:
    return state_from_dict(json.loads(Path(path).read_text()))
