"""Task vectors: extraction, addition, negation, scaling and the
uniform-coefficient grid search."""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, ZeroVector
from .net import ParameterSet

ALPHA_GRID = tuple(round(0.05 * i, 2) for i in range(21))
NEGATION_THRESHOLDS = (0.95, 0.90, 0.80)


@dataclass
class TaskVector(ParameterSet):
    task_id: str = ""

    def with_layers(self, layers, **meta):
        return TaskVector(self.spec, dict(layers), {**self.meta, **meta}, self.task_id)


def _check(theta0, other):
    if list(other.layers) != list(theta0.layers):
        raise ShapeMismatch(f"layers {list(other.layers)} != {list(theta0.layers)}")
    theta0.check_compatible(other)


def extract(theta0, theta_star, task_id=None):
    """tau = theta_star - theta0, layer by layer."""
    _check(theta0, theta_star)
    tid = task_id if task_id is not None else theta_star.meta.get("task_id") or ""
    meta = {"kind": "task_vector", "task_id": tid,
            "lambda": theta_star.meta.get("lambda"), "seed": theta_star.meta.get("seed")}
    layers = {n: theta_star[n] - theta0[n] for n in theta0.layers}
    return TaskVector(theta0.spec, layers, meta, tid)


def _coefficients(alphas, count):
    if np.isscalar(alphas):
        alphas = [float(alphas)] * count
    alphas = [float(a) for a in alphas]
    if len(alphas) != count:
        raise ShapeMismatch(f"{count} task vectors but {len(alphas)} coefficients")
    if not all(np.isfinite(alphas)):
        raise ValueError("coefficients must be finite")
    return alphas


def merge(theta0, taus, alphas=1.0):
    """theta0 + sum_t alpha_t tau_t.

    The scaled contributions are sorted per entry before summation, so the
    result is bit-identical under any permutation of the task list.
    """
    taus = list(taus)
    for tau in taus:
        _check(theta0, tau)
    coeffs = _coefficients(alphas, len(taus))
    if not taus:
        return theta0.with_layers(theta0.layers, task_id=None)
    layers = {}
    for name, w0 in theta0.items():
        terms = np.stack([a * tau[name] for a, tau in zip(coeffs, taus)])
        layers[name] = w0 + np.sort(terms, axis=0).sum(axis=0)
    return ParameterSet(theta0.spec, layers, {**theta0.meta, "alphas": coeffs,
                                              "task_id": None})


def negate(theta0, tau, alpha):
    """theta0 - alpha * tau."""
    if alpha < 0:
        raise ValueError("negation coefficient must be >= 0")
    return merge(theta0, [tau], [-float(alpha)])


def flat_inner(a, b):
    return float(np.sum(a.flat() * b.flat()))


def flat_norm(a):
    return float(np.sqrt(np.sum(a.flat() ** 2)))


def cosine_similarity_matrix(taus):
    """Pairwise cosine similarity of flattened task vectors (T x T)."""
    taus = list(taus)
    if len(taus) < 1:
        raise ValueError("need at least one task vector")
    flats = [t.flat() for t in taus]
    norms = [float(np.sqrt(np.sum(f * f))) for f in flats]
    zero = [i for i, nv in enumerate(norms) if nv == 0.0]
    if zero:
        raise ZeroVector(f"zero task vectors at positions {zero}")
    k = len(taus)
    sim = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            c = float(np.sum(flats[i] * flats[j])) / (norms[i] * norms[j])
            sim[i, j] = sim[j, i] = min(1.0, max(-1.0, c))
    return sim


def mean_abs_offdiag(sim):
    k = sim.shape[0]
    if k < 2:
        return 0.0
    iu = np.triu_indices(k, 1)
    return float(np.mean(np.abs(sim[iu])))


@dataclass
class AlphaRow:
    alpha: float
    objective: float
    accuracies: dict


def grid_search_alpha(eval_fn, alphas=ALPHA_GRID):
    """Maximize ``eval_fn(alpha)`` over the uniform grid.

    ``eval_fn`` returns either a scalar objective or a pair
    ``(objective, per_task_accuracies)``. Ties go to the smaller alpha.

    Returns
    -------
    best_alpha : float
    table : list of AlphaRow, in grid order
    """
    table = []
    for a in alphas:
        out = eval_fn(a)
        obj, accs = (out if isinstance(out, tuple) else (out, {}))
        table.append(AlphaRow(float(a), float(obj), dict(accs)))
    best = table[0]
    for row in table[1:]:
        if row.objective > best.objective:
            best = row
    return best.alpha, table


def select_negation(table, control_baseline, threshold=0.95):
    """Pick the negation coefficient.

    ``table`` rows carry ``accuracies`` with keys ``"target"`` and
    ``"control"``. Among coefficients whose control accuracy is at least
    ``threshold * control_baseline`` the one with the lowest target
    accuracy wins (smaller alpha on ties). Returns None when nothing
    qualifies.
    """
    floor = threshold * control_baseline
    best = None
    for row in table:
        if row.accuracies["control"] + 1e-12 < floor:
            continue
        if best is None or row.accuracies["target"] < best.accuracies["target"]:
            best = row
    return best
