"""Small dense networks with hand-written backprop, plus Adam."""
from __future__ import annotations

import numpy as np


class StaleCacheError(RuntimeError):
    pass


class Mlp:
    """Fully connected net: ReLU hidden layers, tanh or identity output.

    Inputs are (batch, in) or (in,). ``backward`` consumes the cache left by
    the last ``forward`` call.
    """

    def __init__(self, sizes, output="identity", rng=None, final_scale=3e-3):
        if output not in ("identity", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        rng = np.random.default_rng(0) if rng is None else rng
        self.weights = []
        self.biases = []
        n_layers = len(self.sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            lim = final_scale if i == n_layers - 1 else 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-lim, lim, size=fan_out))
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params) -> None:
        params = list(params)
        for i in range(len(self.weights)):
            self.weights[i][...] = params[2 * i]
            self.biases[i][...] = params[2 * i + 1]

    def copy(self) -> "Mlp":
        net = Mlp.__new__(Mlp)
        net.sizes = self.sizes
        net.output = self.output
        net.weights = [w.copy() for w in self.weights]
        net.biases = [b.copy() for b in self.biases]
        net._cache = None
        return net

    def __call__(self, x):
        return self.forward(x, keep=False)

    def forward(self, x, keep=True):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {h.shape[1]} != {self.sizes[0]}")
        acts = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = np.maximum(z, 0.0)
            else:
                h = np.tanh(z) if self.output == "tanh" else z
            acts.append(h)
        self._cache = (acts, single) if keep else None
        return h[0] if single else h

    def backward(self, grad_out):
        """Return (param grads in ``params`` order, grad wrt input)."""
        if self._cache is None:
            raise StaleCacheError("backward needs a preceding forward(keep=True)")
        acts, single = self._cache
        self._cache = None
        g = np.asarray(grad_out, dtype=float)
        g = g[None, :] if single else g
        if self.output == "tanh":
            g = g * (1.0 - acts[-1] ** 2)
        grads = []
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = acts[i]
            grads.append(g.sum(axis=0))
            grads.append(a_in.T @ g)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (acts[i] > 0)
        grads.reverse()  # now [dW0, db0, dW1, db1, ...]
        return grads, (g[0] if single else g)


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        """In-place descent step on ``params``."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
