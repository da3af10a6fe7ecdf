"""
Fine-tuning with the update-orthogonality penalty.

The trainable quantity is the update ``delta`` added to a frozen anchor
``theta0``. The total objective is ``task_loss(theta0 + delta) +
lam * ortho_loss(delta)``, where ``ortho_loss`` sums
``||G_l - I||_F^2`` over the regularized layers and ``G_l`` is the Gram
matrix of the layer update taken along its smaller dimension.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import net
from .errors import DivergenceDetected, ShapeMismatch


@dataclass(frozen=True)
class OrthoConfig:
    lam: float = 0.0
    regularized_layers: Optional[tuple] = None  # None: every layer
    update_mode: str = "full"
    rank: Optional[int] = None
    tuned_layers: Optional[tuple] = None  # None: every layer; others stay frozen

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.update_mode not in ("full", "low_rank"):
            raise ValueError(f"unknown update mode {self.update_mode!r}")
        if self.update_mode == "low_rank" and (self.rank is None or self.rank < 1):
            raise ValueError("low_rank mode needs rank >= 1")
        for name in ("regularized_layers", "tuned_layers"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, tuple(getattr(self, name)))

    def _select(self, spec, chosen):
        names = spec.layer_names
        if chosen is None:
            return list(names)
        unknown = set(chosen) - set(names)
        if unknown:
            raise ValueError(f"unknown layers {sorted(unknown)}")
        return [n for n in names if n in chosen]

    def layers_for(self, spec):
        """Regularized layers; frozen layers are never penalized."""
        tuned = set(self.tuned_for(spec))
        return [n for n in self._select(spec, self.regularized_layers) if n in tuned]

    def tuned_for(self, spec):
        return self._select(spec, self.tuned_layers)

    def check(self, spec):
        self.layers_for(spec)
        if self.update_mode == "low_rank":
            smallest = min(min(s) for s in spec.layer_shapes)
            if self.rank > smallest:
                raise ValueError(f"rank {self.rank} exceeds smallest layer dim {smallest}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    lr: float = 0.002
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "sgd_momentum"
    momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 0 or not self.lr > 0 or self.batch_size < 1:
            raise ValueError("need epochs >= 0, lr > 0 and batch_size >= 1")
        if self.optimizer != "sgd_momentum":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")


@dataclass
class History:
    epoch: list = field(default_factory=list)
    task_loss: list = field(default_factory=list)
    ortho_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)

    def rows(self):
        return list(zip(self.epoch, self.task_loss, self.ortho_loss, self.val_acc))


def update_gram(dw):
    """Gram matrix of ``dw`` along its smaller dimension."""
    dw = np.asarray(dw, dtype=np.float64)
    g = dw.T @ dw if dw.shape[0] >= dw.shape[1] else dw @ dw.T
    return 0.5 * (g + g.T)


def gram_deviation(dw):
    """``||G - I||_F^2`` for a single update matrix."""
    g = update_gram(dw)
    g[np.diag_indices_from(g)] -= 1.0
    return float(np.sum(g * g))


def ortho_loss(delta_weights):
    """Sum of per-layer Gram deviations; accepts a list or a name->matrix dict."""
    if isinstance(delta_weights, dict):
        delta_weights = list(delta_weights.values())
    return float(sum(gram_deviation(dw) for dw in delta_weights))


def _ortho_grad_one(dw):
    dw = np.asarray(dw, dtype=np.float64)
    g = update_gram(dw)
    g[np.diag_indices_from(g)] -= 1.0
    if dw.shape[0] >= dw.shape[1]:
        return 4.0 * dw @ g
    return 4.0 * g @ dw


def ortho_loss_grad(delta_weights):
    """Gradient of :func:`ortho_loss`: ``4 dW (dW^T dW - I)`` for tall layers,
    ``4 (dW dW^T - I) dW`` for wide ones."""
    if isinstance(delta_weights, dict):
        return {k: _ortho_grad_one(v) for k, v in delta_weights.items()}
    return [_ortho_grad_one(dw) for dw in delta_weights]


def composite_loss(theta0, delta, x, y, head, lam, reg_layers):
    theta = net.add_scaled(theta0, delta)
    task = net.task_loss(theta, x, y, head)
    return task + lam * ortho_loss([delta[n] for n in reg_layers])


def composite_grad(theta0, delta, x, y, head, lam, reg_layers):
    """Gradient of the composite objective w.r.t. every layer update."""
    theta = net.add_scaled(theta0, delta)
    grads, task = net.backward(theta, x, y, head=head)
    pen = 0.0
    for name in reg_layers:
        grads[name] = grads[name] + lam * _ortho_grad_one(delta[name])
        pen += gram_deviation(delta[name])
    return grads, task, pen


def accuracy_on(params, inputs, labels, head):
    logits = net.forward(params, inputs)[:, head]
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def finetune_task(theta0, train_data, val_data, ortho=OrthoConfig(), train=TrainConfig(),
                  task_id=None):
    """Fine-tune ``theta0`` on one task.

    Parameters
    ----------
    theta0 : ParameterSet
        Frozen anchor; only the update on top of it is trained.
    train_data, val_data : TaskDataset
        Standardized splits of the task. ``val_data`` may be None.
    ortho : OrthoConfig
        Penalty strength, regularized layers and update parametrization.
        In ``low_rank`` mode each update is ``B @ A`` (B starts at zero)
        and the penalty acts on the product.
    train : TrainConfig
    task_id : str, optional
        Selects the logit slice; defaults to ``train_data.task_id`` when the
        model has per-task heads.

    Returns
    -------
    theta_star : ParameterSet
        ``theta0 + delta`` with ``meta`` recording lambda and task id.
    history : History
        Per-epoch training task loss, penalty value and validation accuracy.

    Raises
    ------
    DivergenceDetected
        If the objective becomes non-finite.
    """
    spec = theta0.spec
    ortho.check(spec)
    tid = task_id or train_data.task_id
    head = spec.head_slice(tid if spec.heads else None)
    if train_data.inputs.shape[1] != spec.input_dim:
        raise ShapeMismatch(f"data dim {train_data.inputs.shape[1]} != {spec.input_dim}")
    reg = ortho.layers_for(spec)
    tuned = set(ortho.tuned_for(spec))
    rng = np.random.default_rng([train.seed, 7])
    names = spec.layer_names
    shapes = dict(zip(names, spec.layer_shapes))

    if ortho.update_mode == "full":
        factors = {n: [np.zeros(shapes[n])] for n in names}
    else:
        factors = {}
        for n in names:
            rows, cols = shapes[n]
            a = rng.standard_normal((ortho.rank, cols)) / np.sqrt(cols)
            factors[n] = [np.zeros((rows, ortho.rank)), a]
    velocity = {n: [np.zeros_like(f) for f in fs] for n, fs in factors.items()}

    def compose():
        if ortho.update_mode == "full":
            return theta0.with_layers({n: fs[0] for n, fs in factors.items()})
        return theta0.with_layers({n: fs[0] @ fs[1] for n, fs in factors.items()})

    x_all, y_all = train_data.inputs, train_data.labels
    n = len(y_all)
    history = History()
    # overflow is expected right before a divergence, which is reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, train.epochs + 1):
            order = rng.permutation(n)
            for start in range(0, n, train.batch_size):
                idx = order[start:start + train.batch_size]
                grads, task, pen = composite_grad(theta0, compose(), x_all[idx], y_all[idx],
                                                  head, ortho.lam, reg)
                if not (np.isfinite(task) and np.isfinite(pen)):
                    raise DivergenceDetected(epoch)
                for name, fs in factors.items():
                    if name not in tuned:
                        continue
                    g = grads[name]
                    pgrads = [g] if ortho.update_mode == "full" else [g @ fs[1].T, fs[0].T @ g]
                    for f, v, pg in zip(fs, velocity[name], pgrads):
                        v *= train.momentum
                        v += pg
                        f -= train.lr * v
            delta = compose()
            theta = net.add_scaled(theta0, delta)
            task = net.task_loss(theta, x_all, y_all, head)
            pen = ortho_loss([delta[nm] for nm in reg])
            if not (np.isfinite(task) and np.isfinite(pen)):
                raise DivergenceDetected(epoch)
            history.epoch.append(epoch)
            history.task_loss.append(task)
            history.ortho_loss.append(pen)
            history.val_acc.append(
                accuracy_on(theta, val_data.inputs, val_data.labels, head)
                if val_data is not None else float("nan")
            )

    theta_star = net.add_scaled(theta0, compose())
    theta_star.meta = {"seed": train.seed, "lambda": float(ortho.lam), "task_id": tid}
    return theta_star, history

def pretrain_anchor(spec, datasets, train=TrainConfig(epochs=3, lr=0.01)):
    """Joint multi-task training from random init, used to build an anchor
    with partial competence on every task.

    ``datasets`` maps task id to its training split. Each minibatch step
    sums the per-task mean losses over aligned batches.
    """
    params = net.init_params(spec)
    rng = np.random.default_rng([train.seed, 11])
    velocity = {n: np.zeros(s) for n, s in zip(spec.layer_names, spec.layer_shapes)}
    tasks = list(datasets.items())
    n = min(len(ds) for _, ds in tasks)
    for _ in range(train.epochs):
        orders = [rng.permutation(len(ds))[:n] for _, ds in tasks]
        for start in range(0, n, train.batch_size):
            total = {k: np.zeros_like(v) for k, v in velocity.items()}
            for (tid, ds), order in zip(tasks, orders):
                idx = order[start:start + train.batch_size]
                grads, _ = net.backward(params, ds.inputs[idx], ds.labels[idx],
                                        head=spec.head_slice(tid if spec.heads else None))
                for k in total:
                    total[k] += grads[k]
            layers = {}
            for k, v in velocity.items():
                v *= train.momentum
                v += total[k]
                layers[k] = params[k] - train.lr * v
            params = params.with_layers(layers)
    params.meta = {"seed": spec.seed, "lambda": 0.0, "task_id": None}
    return params
