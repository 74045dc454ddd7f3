import numpy as np


class Adam:
    """Adam with bias-corrected first and second moments.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, grads=None):
        """Apply one update; ``grads`` defaults to each parameter's ``.grad`` (None counts as zero)."""
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items()}
        grads = {k: np.zeros_like(p.data) if grads[k] is None else grads[k] for k, p in self.params.items()}
        new, state = adam_step({k: p.data for k, p in self.params.items()}, grads,
                               {"t": self.t, "m": self.m, "v": self.v},
                               self.lr, self.beta1, self.beta2, self.eps)
        for k, p in self.params.items():
            p.data = new[k]
        self.t, self.m, self.v = state["t"], state["m"], state["v"]

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self):
        return {
            "t": self.t,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "m": {k: v for k, v in self.m.items()},
            "v": {k: v for k, v in self.v.items()},
        }

    def load_state_dict(self, state):
        self.t = int(state["t"])
        self.lr, self.beta1, self.beta2, self.eps = (float(state[k]) for k in ("lr", "beta1", "beta2", "eps"))
        self.m = {k: np.asarray(v, dtype=float) for k, v in state["m"].items()}
        self.v = {k: np.asarray(v, dtype=float) for k, v in state["v"].items()}


def adam_step(params, grads, state=None, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Functional Adam on plain arrays. Returns ``(new_params, new_state)``."""
    if state is None:
        state = {"t": 0, "m": {k: np.zeros_like(v) for k, v in params.items()},
                 "v": {k: np.zeros_like(v) for k, v in params.items()}}
    t = state["t"] + 1
    new_params, m_all, v_all = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = beta1 * state["m"][k] + (1.0 - beta1) * g
        v = beta2 * state["v"][k] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_all[k], v_all[k] = m, v
    return new_params, {"t": t, "m": m_all, "v": v_all}
