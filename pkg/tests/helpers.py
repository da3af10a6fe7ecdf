"""Shared oracles for the test suite."""

import numpy as np

from orthomerge import net


def central_diff(f, w, h=1e-5):
    """Central finite-difference gradient of scalar ``f()`` w.r.t. array ``w``
    (perturbed in place and restored)."""
    g = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        old = w[idx]
        w[idx] = old + h
        fp = f()
        w[idx] = old - h
        fm = f()
        w[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def rel_err(numeric, analytic):
    return float(np.max(np.abs(numeric - analytic) / np.maximum(1e-8, np.abs(analytic))))


def random_net(seed, max_hidden=2):
    rng = np.random.default_rng(seed)
    hidden = tuple(int(v) for v in rng.integers(2, 9, size=seed % (max_hidden + 1)))
    spec = net.ModelSpec(int(rng.integers(2, 7)), hidden, int(rng.integers(2, 5)), seed=seed)
    params = net.init_params(spec)
    x = rng.standard_normal((5, spec.input_dim))
    y = rng.integers(0, spec.num_classes, 5)
    return params, x, y, rng


def naive_forward(layers, x):
    """Loop-based reimplementation of the tanh MLP."""
    h = list(x)
    for k, w in enumerate(layers):
        out = []
        for j in range(w.shape[1]):
            s = 0.0
            for i in range(w.shape[0]):
                s += h[i] * w[i, j]
            out.append(s)
        h = out if k == len(layers) - 1 else [float(np.tanh(v)) for v in out]
    return np.array(h)
