"""Adam optimizer, global-norm gradient clipping, and a gradient checker."""

import numpy as np

from .autodiff import Graph, backward, zero_grads


class AdamState:
    """First/second moment buffers and step counter for a fixed param list."""

    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]


def adam_step(params, state):
    """One Adam update with bias correction; increments the step counter."""
    params = list(params)
    if len(params) != len(state.params):
        raise ValueError(
            f"adam_step got {len(params)} params, state has {len(state.params)}"
        )
    for p in params:
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {p!r} has no gradient")
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    lr = state.learning_rate
    for i, p in enumerate(params):
        g = p.grad
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / (1.0 - b1**t)
        v_hat = state.v[i] / (1.0 - b2**t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)


def clip_global_norm(params, max_norm=5.0):
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return norm


def grad_check(build, params, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `build(graph)` must deterministically construct a scalar loss from the
    given params. Relative error per entry is
    |analytic - numeric| / max(1, |analytic|, |numeric|). Requires float64
    parameters; float32 differences drown in roundoff.
    """
    params = list(params)
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError(f"grad_check needs float64 params, got {p.data.dtype}")

    g = Graph()
    loss = build(g)
    zero_grads(params)
    backward(g, loss)
    analytic = [np.array(p.grad) if p.grad is not None else np.zeros_like(p.data) for p in params]

    def eval_loss():
        return build(Graph(record=False)).data.item()

    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        an_flat = an.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            hi = eval_loss()
            flat[k] = orig - eps
            lo = eval_loss()
            flat[k] = orig
            numeric = (hi - lo) / (2.0 * eps)
            denom = max(1.0, abs(an_flat[k]), abs(numeric))
            worst = max(worst, abs(an_flat[k] - numeric) / denom)
    return worst
