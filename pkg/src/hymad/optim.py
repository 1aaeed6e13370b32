"""AdamW with decoupled weight decay, plus a finite-difference gradient checker."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from hymad.errors import NumericError
from hymad.tensor import Tensor, no_grad


class AdamW:
    """Bias-corrected Adam moments with weight decay applied separately.

    The decay term theta <- theta - lr*wd*theta never touches the moment
    estimates, so lr = 0 leaves parameters bit-identical.
    """

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-2,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = list(params)
        if not (0.0 <= betas[0] < 1.0 and 0.0 <= betas[1] < 1.0):
            raise ValueError(f"betas must lie in [0, 1), got {betas}")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for i, p in enumerate(self.params):
            g = p.grad
            if g is not None and not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient in parameter {i}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            if self.weight_decay:
                p.data = p.data - self.lr * self.weight_decay * p.data
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def grad_check(f: Callable[[], Tensor], params: list[Tensor],
               eps: float = 1e-5) -> dict:
    """Compare analytic gradients of a scalar function against central differences.

    `f` must rebuild its graph from the current contents of `params` on every
    call.  Returns {"max_rel_err": float, "per_param": [(index, rel_err), ...]}.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for p in params:
        p.grad = None
    out = f()
    if not np.isfinite(out.data).all():
        raise NumericError("function value is not finite")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    max_rel = 0.0
    table = []
    with no_grad():
        for i, p in enumerate(params):
            worst = 0.0
            flat = p.data.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                hi = float(f().data)
                flat[j] = orig - eps
                lo = float(f().data)
                flat[j] = orig
                numeric = (hi - lo) / (2.0 * eps)
                a = analytic[i].reshape(-1)[j]
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, rel)
            table.append((i, worst))
            max_rel = max(max_rel, worst)
    return {"max_rel_err": max_rel, "per_param": table}
