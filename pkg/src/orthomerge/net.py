"""
Bias-free tanh MLP with hand-written forward, backward and parameter
Jacobians.

Layer ``l`` holds a weight of shape (fan_in, fan_out) and computes
``z = a @ W``; the columns of ``W`` are the per-unit feature extractors.
Hidden layers apply ``tanh``; the last layer emits logits. A multi-task
model shares one trunk and gives each task its own slice of the logits.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden_dims: tuple
    num_classes: int
    activation: str = "tanh"
    seed: int = 0
    # ordered (task_id, classes) pairs; empty means one head over all logits
    heads: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "heads", tuple((str(t), int(c)) for t, c in self.heads))
        dims = (self.input_dim, *self.hidden_dims, self.num_classes)
        if any(int(d) < 1 for d in dims):
            raise ValueError(f"all dims must be >= 1, got {dims}")
        if self.activation != "tanh":
            raise ValueError("only tanh hidden layers are supported")
        if self.heads and sum(c for _, c in self.heads) != self.num_classes:
            raise ValueError("head sizes must add up to num_classes")

    @property
    def layer_names(self):
        return [f"hidden{i}" for i in range(len(self.hidden_dims))] + ["head"]

    @property
    def layer_shapes(self):
        dims = (self.input_dim, *self.hidden_dims, self.num_classes)
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def head_slice(self, task_id=None):
        """Logit slice owned by ``task_id`` (all logits when None)."""
        if task_id is None or not self.heads:
            return slice(0, self.num_classes)
        start = 0
        for tid, c in self.heads:
            if tid == task_id:
                return slice(start, start + c)
            start += c
        raise KeyError(f"no head for task {task_id!r}")

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "num_classes": self.num_classes,
            "activation": self.activation,
            "seed": self.seed,
            "heads": [[t, c] for t, c in self.heads],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            input_dim=d["input_dim"],
            hidden_dims=tuple(d["hidden_dims"]),
            num_classes=d["num_classes"],
            activation=d.get("activation", "tanh"),
            seed=d.get("seed", 0),
            heads=tuple(tuple(h) for h in d.get("heads", ())),
        )


@dataclass
class ParameterSet:
    """Ordered layer weights of one model (or one parameter delta)."""

    spec: ModelSpec
    layers: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        names = self.spec.layer_names
        if list(self.layers) != names:
            raise ShapeMismatch(f"layer names {list(self.layers)} != {names}")
        fixed = {}
        for (name, w), shape in zip(self.layers.items(), self.spec.layer_shapes):
            w = np.array(w, dtype=np.float64)
            if w.shape != shape:
                raise ShapeMismatch(f"{name}: shape {w.shape} != {shape}")
            fixed[name] = w
        self.layers = fixed

    def __getitem__(self, name):
        return self.layers[name]

    def items(self):
        return self.layers.items()

    @property
    def num_params(self):
        return sum(w.size for w in self.layers.values())

    def flat(self):
        return np.concatenate([w.ravel() for w in self.layers.values()])

    def with_layers(self, layers, **meta):
        return type(self)(self.spec, dict(layers), {**self.meta, **meta})

    def check_compatible(self, other):
        if other.spec.layer_shapes != self.spec.layer_shapes:
            raise ShapeMismatch(
                f"layer shapes {other.spec.layer_shapes} != {self.spec.layer_shapes}"
            )


def init_params(spec):
    """Gaussian weights with std 1/sqrt(fan_in), seeded by ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    layers = {}
    for name, (fan_in, fan_out) in zip(spec.layer_names, spec.layer_shapes):
        layers[name] = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
    return ParameterSet(spec, layers, {"seed": spec.seed})


def _inputs(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.spec.input_dim or x.ndim > 2:
        raise ShapeMismatch(
            f"input shape {x.shape} incompatible with input_dim {params.spec.input_dim}"
        )
    return x


def _activations(params, x):
    acts = [x]
    ws = list(params.layers.values())
    for w in ws[:-1]:
        acts.append(np.tanh(acts[-1] @ w))
    return acts, acts[-1] @ ws[-1]


def forward(params, x):
    """Logits for one input vector or a batch of row vectors."""
    x = _inputs(params, x)
    return _activations(params, x)[1]


def _backprop(params, acts, dlogits):
    """Weight gradients summed over the batch given d(objective)/d(logits)."""
    ws = list(params.layers.values())
    names = list(params.layers)
    grads = {}
    delta = dlogits
    for i in range(len(ws) - 1, -1, -1):
        grads[names[i]] = acts[i].T @ delta
        if i > 0:
            delta = (delta @ ws[i].T) * (1.0 - acts[i] ** 2)
    return {n: grads[n] for n in names}


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def task_loss(params, x, y, head=None):
    """Mean cross-entropy over the ``head`` slice of the logits."""
    x = np.atleast_2d(_inputs(params, x))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    head = head or params.spec.head_slice()
    logp = _log_softmax(forward(params, x)[:, head])
    return float(-np.mean(logp[np.arange(len(y)), y]))


def backward(params, x, y, loss="cross_entropy", head=None):
    """Gradient of the cross-entropy loss w.r.t. every weight matrix.

    ``x`` may be a single vector with an integer label or a batch with a
    label array; batch losses and gradients are means over rows. Labels are
    local to ``head`` (a slice of the logits, default: all logits).

    Returns
    -------
    grads : dict
        Layer name -> gradient with that layer's shape.
    value : float
        The loss.
    """
    if loss != "cross_entropy":
        raise ValueError(f"unsupported loss {loss!r}")
    x = np.atleast_2d(_inputs(params, x))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if len(y) != len(x):
        raise ShapeMismatch(f"{len(x)} inputs but {len(y)} labels")
    head = head or params.spec.head_slice()
    n_cls = head.stop - head.start
    if np.any((y < 0) | (y >= n_cls)):
        raise ValueError(f"labels must lie in [0, {n_cls})")
    acts, logits = _activations(params, x)
    logp = _log_softmax(logits[:, head])
    n = len(y)
    value = float(-np.mean(logp[np.arange(n), y]))
    dlogits = np.zeros_like(logits)
    probs = np.exp(logp)
    probs[np.arange(n), y] -= 1.0
    dlogits[:, head] = probs / n
    return _backprop(params, acts, dlogits), value


@dataclass
class JacobianRecord:
    """Gradient of one scalar model output w.r.t. all weights."""

    blocks: dict
    target: int
    scalarization: str = "true_class_logit"

    def flat(self):
        return np.concatenate([b.ravel() for b in self.blocks.values()])


def jacobian(params, x, target, scalarization="true_class_logit"):
    """J(x): gradient of logit ``target`` at input ``x``.

    ``target`` is the global logit index of the true class (task offset plus
    task-local label).
    """
    if scalarization != "true_class_logit":
        raise ValueError(f"unsupported scalarization {scalarization!r}")
    x = _inputs(params, x)
    if x.ndim != 1:
        raise ShapeMismatch("jacobian takes a single input vector")
    acts, logits = _activations(params, x[None, :])
    dlogits = np.zeros_like(logits)
    dlogits[0, int(target)] = 1.0
    return JacobianRecord(_backprop(params, acts, dlogits), int(target), scalarization)


def jacobians(params, x, targets):
    """Flattened Jacobians for a batch, one row per input, shape (n, P)."""
    x = np.atleast_2d(_inputs(params, x))
    targets = np.asarray(targets, dtype=np.int64)
    acts, logits = _activations(params, x)
    ws = list(params.layers.values())
    n = len(x)
    delta = np.zeros_like(logits)
    delta[np.arange(n), targets] = 1.0
    blocks = [None] * len(ws)
    for i in range(len(ws) - 1, -1, -1):
        blocks[i] = (acts[i][:, :, None] * delta[:, None, :]).reshape(n, -1)
        if i > 0:
            delta = (delta @ ws[i].T) * (1.0 - acts[i] ** 2)
    return np.concatenate(blocks, axis=1)


def scalar_output(params, x, targets):
    """Selected logit per row: f(x) under the true-class scalarization."""
    x = np.atleast_2d(_inputs(params, x))
    logits = forward(params, x)
    return logits[np.arange(len(x)), np.asarray(targets, dtype=np.int64)]


def add_scaled(base, delta, alpha=1.0):
    base.check_compatible(delta)
    return base.with_layers({n: base[n] + alpha * delta[n] for n in base.layers})


def linearized_forward(theta0, tau, x, target):
    """First-order Taylor prediction f(x; theta0) + tau . J(x) for one logit."""
    theta0.check_compatible(tau)
    rec = jacobian(theta0, x, target)
    f0 = float(forward(theta0, x)[int(target)])
    return f0 + sum(float(np.sum(tau[n] * rec.blocks[n])) for n in tau.layers)
