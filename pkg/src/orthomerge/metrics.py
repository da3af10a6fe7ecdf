"""
Diagnostics for merged models: accuracies, interference, disentanglement
gaps, empirical NTK blocks and column-angle statistics.

All per-sample quantities use the true-class-logit scalarization: for an
input of task ``t`` with label ``y`` the scalar output is the logit at
``head_slice(t).start + y``.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import net
from .errors import EmptyDataset, ZeroDenominator
from .linalg import column_angles

SCALARIZATION = "true_class_logit"
COS_SKIP_NORM = 1e-12


def head_for(params, dataset):
    spec = params.spec
    return spec.head_slice(dataset.task_id if spec.heads else None)


def targets_for(params, dataset):
    """Global logit index of each sample's true class."""
    return head_for(params, dataset).start + np.asarray(dataset.labels, dtype=np.int64)


def accuracy(params, dataset):
    """Fraction of argmax-correct predictions on the task's own logit slice."""
    if len(dataset) == 0:
        raise EmptyDataset(f"dataset {dataset.task_id}/{dataset.split} is empty")
    logits = net.forward(params, dataset.inputs)[:, head_for(params, dataset)]
    return float(np.mean(np.argmax(logits, axis=1) == dataset.labels))


def normalized_accuracy(merged_acc, single_acc):
    """Mean ratio of merged to single-task accuracy, in percent."""
    merged_acc = [float(a) for a in merged_acc]
    single_acc = [float(a) for a in single_acc]
    if len(merged_acc) != len(single_acc) or not merged_acc:
        raise ValueError("need equally long, non-empty accuracy lists")
    if any(s == 0.0 for s in single_acc):
        raise ZeroDenominator("single-task accuracy of zero")
    return 100.0 * sum(m / s for m, s in zip(merged_acc, single_acc)) / len(merged_acc)


@dataclass
class Interference:
    mean_abs: float
    mean_cos: float
    skipped: int


def interference(tau_j, theta0, dataset_t):
    """Mean |tau_j . J(x)| and mean |cos(tau_j, J(x))| over ``dataset_t``.

    Jacobians are taken at ``theta0`` over every layer. Samples whose
    Jacobian norm is below ``COS_SKIP_NORM`` are left out of the cosine mean
    and counted in ``skipped``.
    """
    theta0.check_compatible(tau_j)
    jac = net.jacobians(theta0, dataset_t.inputs, targets_for(theta0, dataset_t))
    tau = tau_j.flat()
    dots = np.sum(jac * tau, axis=1)
    mean_abs = float(np.mean(np.abs(dots)))
    tau_norm = float(np.sqrt(np.sum(tau * tau)))
    jn = np.sqrt(np.sum(jac * jac, axis=1))
    ok = jn >= COS_SKIP_NORM
    if tau_norm == 0.0 or not ok.any():
        mean_cos = 0.0
    else:
        mean_cos = float(np.mean(np.abs(dots[ok]) / (jn[ok] * tau_norm)))
    return Interference(mean_abs, mean_cos, int(np.count_nonzero(~ok)))


def disentanglement_gap(theta0, tau_t, tau_j, dataset_t):
    """Mean |f(x; theta0 + tau_t + tau_j) - f(x; theta0 + tau_t)| on D_t,
    evaluated with the full nonlinear model."""
    from .arith import merge

    targets = targets_for(theta0, dataset_t)
    both = net.scalar_output(merge(theta0, [tau_t, tau_j]), dataset_t.inputs, targets)
    alone = net.scalar_output(merge(theta0, [tau_t]), dataset_t.inputs, targets)
    return float(np.mean(np.abs(both - alone)))


def output_scale(params, dataset):
    """Mean |scalarized output|, the yardstick for relative gaps."""
    return float(np.mean(np.abs(net.scalar_output(params, dataset.inputs,
                                                  targets_for(params, dataset)))))


def out_of_domain_gap(theta0, merged, inputs, targets):
    """Mean |f(x; merged) - f(x; theta0)| on inputs outside every task domain."""
    return float(np.mean(np.abs(net.scalar_output(merged, inputs, targets)
                                - net.scalar_output(theta0, inputs, targets))))


def ntk_gram(theta0, inputs_a, targets_a, inputs_b=None, targets_b=None):
    """Empirical tangent kernel K[i, k] = J(a_i) . J(b_k) at ``theta0``."""
    ja = net.jacobians(theta0, inputs_a, targets_a)
    if inputs_b is None:
        k = ja @ ja.T
        return 0.5 * (k + k.T)
    jb = net.jacobians(theta0, inputs_b, targets_b)
    return ja @ jb.T


def ntk_localization(theta0, datasets, per_task=None):
    """Mean |K| over cross-task pairs divided by mean |K| over distinct
    same-task pairs.

    ``datasets`` is a list of task datasets; ``per_task`` caps the number of
    samples drawn from each (the first ones are used).
    """
    xs, ts, owner = [], [], []
    for i, ds in enumerate(datasets):
        n = len(ds) if per_task is None else min(per_task, len(ds))
        xs.append(ds.inputs[:n])
        ts.append(targets_for(theta0, ds)[:n])
        owner.extend([i] * n)
    k = np.abs(ntk_gram(theta0, np.concatenate(xs), np.concatenate(ts)))
    owner = np.asarray(owner)
    same = owner[:, None] == owner[None, :]
    off_diag = ~np.eye(len(owner), dtype=bool)
    on = k[same & off_diag]
    off = k[~same]
    return float(off.mean() / on.mean()), k


@dataclass
class AngleSummary:
    counts: list
    edges: list
    mean_abs_dev: float
    std: float
    pairs: int
    skipped_columns: list


def angle_histogram(mat, bins=36, skip_degenerate=False):
    """Histogram over [0, 180] degrees of pairwise column angles.

    ``mean_abs_dev`` is the mean |angle - 90|; ``std`` is the spread of the
    angles themselves.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    mat = np.asarray(mat, dtype=np.float64)
    norms = np.sqrt(np.sum(mat * mat, axis=0))
    skipped = np.flatnonzero(norms <= 1e-12).tolist() if skip_degenerate else []
    angles = column_angles(mat, skip_degenerate=skip_degenerate)
    counts, edges = np.histogram(angles, bins=bins, range=(0.0, 180.0))
    if angles.size:
        dev, std = float(np.mean(np.abs(angles - 90.0))), float(np.std(angles))
    else:
        dev, std = 0.0, 0.0
    return AngleSummary(counts.tolist(), edges.tolist(), dev, std, int(angles.size), skipped)


@dataclass
class MetricsReport:
    abs_accuracy: dict = field(default_factory=dict)
    normalized_accuracy: float = None
    interference: dict = field(default_factory=dict)
    mean_abs_cosine: float = None
    angle_summaries: dict = field(default_factory=dict)
    ntk_localization: float = None
    meta: dict = field(default_factory=lambda: {"scalarization": SCALARIZATION})

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
