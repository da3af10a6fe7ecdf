"""
Numerical validators for the theoretical claims behind orthogonal
fine-tuning and task arithmetic.

Each validator runs a seeded experiment and returns a
:class:`ValidationReport` whose verdict follows only from the recorded
statistics and tolerances.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import arith, metrics, net, protocol
from .errors import ShapeMismatch
from .linalg import polar_decompose, sample_stiefel_batch

# calibration constants for the feature-specialization chain
PROXY_MASS_MAX = 0.10
INTERFERENCE_COS_MAX = 0.05
GAP_FRACTION_MAX = 0.05
CONTROL_RATIO_MIN = 3.0
SINGLE_ACC_MIN = 0.9


@dataclass
class ValidationReport:
    name: str
    trials: int
    seed: object
    statistics: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    tolerance: dict = field(default_factory=dict)
    verdict: bool = False
    details: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["verdict"] = "pass" if self.verdict else "fail"
        return d

    def to_json(self):
        return json.dumps(_plain(self.to_dict()), indent=2, sort_keys=True)

    def summary(self):
        lines = [f"{self.name}: {'PASS' if self.verdict else 'FAIL'} "
                 f"(trials={self.trials}, seed={self.seed})"]
        for key in sorted(self.statistics):
            lines.append(f"  {key} = {_fmt(self.statistics[key])}")
        for key in sorted(self.bounds):
            lines.append(f"  bound {key} = {_fmt(self.bounds[key])}")
        for key in sorted(self.tolerance):
            lines.append(f"  tolerance {key} = {_fmt(self.tolerance[key])}")
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _plain(obj):
    """Convert numpy scalars and arrays into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _batched_gram_deviation(w):
    g = np.einsum("nij,nik->njk", w, w)
    g -= np.eye(w.shape[-1])
    return np.einsum("njk,njk->n", g, g)


def _random_matrices(rng, n, m, d):
    """A mix of Gaussian, near-orthonormal and spread-spectrum matrices."""
    k = n // 3
    gauss = rng.standard_normal((k, m, d)) * rng.uniform(0.05, 3.0, (k, 1, 1)) / np.sqrt(m)
    q = sample_stiefel_batch(k, m, d, rng)
    near = q + rng.standard_normal((k, m, d)) * 10.0 ** rng.uniform(-6, -1, (k, 1, 1))
    rest = n - 2 * k
    u = sample_stiefel_batch(rest, m, d, rng)
    v = sample_stiefel_batch(rest, d, d, rng)
    s = rng.uniform(0.0, 2.0, (rest, d))
    spread = np.einsum("nij,nj,nkj->nik", u, s, v)
    return np.concatenate([gauss, near, spread])


def validate_norm_bound(trials=10_000, dims=(8, 4), seed=0, tol=1e-9):
    """``||W||_F^2 <= d + sqrt(d * xi)`` with ``xi = ||W^T W - I||_F^2``.

    Also builds, for a ladder of ``xi`` levels, the matrix whose squared
    singular values all equal ``1 + sqrt(xi / d)`` and checks that it meets
    the bound with equality.
    """
    m, d = dims
    if m < d:
        raise ShapeMismatch(f"need m >= d, got {dims}")
    rng = np.random.default_rng(seed)
    w = _random_matrices(rng, trials, m, d)
    fro2 = np.einsum("nij,nij->n", w, w)
    xi = _batched_gram_deviation(w)
    bound = d + np.sqrt(d * xi)
    slack = fro2 - bound
    violations = int(np.count_nonzero(slack > tol))

    levels = np.concatenate([[0.0], np.logspace(-6, 2, 25)])
    eq_err = []
    for level in levels:
        u = sample_stiefel_batch(1, m, d, rng)[0]
        v = sample_stiefel_batch(1, d, d, rng)[0]
        sigma = np.sqrt(1.0 + np.sqrt(level / d))
        we = (u * sigma) @ v.T
        xi_e = float(_batched_gram_deviation(we[None])[0])
        eq_err.append(abs(float(np.sum(we * we)) - (d + np.sqrt(d * xi_e))))
    eq_max = max(eq_err)
    return ValidationReport(
        name="norm-bound", trials=trials, seed=seed,
        statistics={"violations": violations, "max_slack": float(slack.max()),
                    "equality_max_error": eq_max, "equality_cases": len(levels),
                    "xi_max": float(xi.max())},
        bounds={"rhs": "d + sqrt(d*xi)"},
        tolerance={"violation": tol, "equality": tol},
        verdict=violations == 0 and eq_max <= tol,
        details={"dims": [m, d]},
    )


def validate_psd_inequality(trials=10_000, d=4, seed=0, tol=1e-12):
    """``||P - I||_F <= ||P^2 - I||_F`` for random symmetric PSD ``P``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    mats = rng.standard_normal((trials, d, d))
    p = np.einsum("nji,njk->nik", mats, mats) / d
    p *= rng.uniform(0.0, 3.0, (trials, 1, 1))
    p = 0.5 * (p + np.swapaxes(p, 1, 2))
    eye = np.eye(d)
    lhs = np.sqrt(np.einsum("nij,nij->n", p - eye, p - eye))
    p2 = p @ p
    rhs = np.sqrt(np.einsum("nij,nij->n", p2 - eye, p2 - eye))
    slack = lhs - rhs
    violations = int(np.count_nonzero(slack > tol))
    return ValidationReport(
        name="psd", trials=trials, seed=seed,
        statistics={"violations": violations, "max_slack": float(slack.max())},
        bounds={"rhs": "||P^2 - I||_F"}, tolerance={"violation": tol},
        verdict=violations == 0, details={"d": d},
    )


def validate_stiefel_inner(trials=10_000, dims=(16, 4), seed=0, ortho_tol=1e-10, bins=40):
    """Mean of ``Z = Tr(A^T B)`` for independent Haar pairs is zero.

    The spread of ``Z`` is reported next to the matched-norm baseline of two
    independent uniformly random vectors of norm ``sqrt(d)`` in dimension
    ``m * d``, whose inner product also has variance ``d / m``; the
    comparison is informational only.
    """
    m, d = dims
    if m < d:
        raise ShapeMismatch(f"need m >= d, got {dims}")
    rng = np.random.default_rng(seed)
    a = sample_stiefel_batch(trials, m, d, rng)
    b = sample_stiefel_batch(trials, m, d, rng)
    eye = np.eye(d)
    dev = max(float(np.abs(np.einsum("nij,nik->njk", q, q) - eye).max()) for q in (a, b))
    z = np.einsum("nij,nij->n", a, b)
    mean, std = float(z.mean()), float(z.std(ddof=1))
    se = std / np.sqrt(trials)
    counts, edges = np.histogram(z, bins=bins, range=(-float(d), float(d)))
    return ValidationReport(
        name="stiefel", trials=trials, seed=seed,
        statistics={"mean": mean, "std": std, "variance": std ** 2, "standard_error": se,
                    "max_orthonormality_error": dev},
        bounds={"mean_abs": 3.0 * se, "baseline_variance": d / m},
        tolerance={"sigmas": 3.0, "orthonormality": ortho_tol},
        verdict=abs(mean) <= 3.0 * se and dev <= ortho_tol,
        details={"dims": [m, d], "histogram": {"counts": counts.tolist(), "edges": edges.tolist()}},
    )


def validate_polar_error_terms(dims=(12, 4), xi_levels=(0.0, 1e-4, 1e-2, 0.1, 1.0),
                               seed=0, pairs=1000, tol=1e-10):
    """Error terms of ``W = Q (I + E)`` with ``E = P - I``.

    Checks ``||E||_F <= ||P^2 - I||_F`` at each deviation level, that
    ``||Q E||_F = ||E||_F`` and the cross-term bound
    ``|<Q_t, Q_j E_j>| <= sqrt(d) ||E_j||_F`` over random pairs.
    """
    m, d = dims
    if m < d:
        raise ShapeMismatch(f"need m >= d, got {dims}")
    rng = np.random.default_rng(seed)
    eye = np.eye(d)
    level_rows, ineq_viol, iso_err, zero_err = [], 0, 0.0, 0.0
    for level in xi_levels:
        for _ in range(max(1, pairs // len(xi_levels))):
            w = _perturbed_stiefel(rng, m, d, level)
            q, p = polar_decompose(w)
            e = p - eye
            e_norm = float(np.linalg.norm(e))
            p2 = p @ p - eye
            if e_norm > float(np.linalg.norm(p2)) + tol:
                ineq_viol += 1
            iso_err = max(iso_err, abs(float(np.linalg.norm(q @ e)) - e_norm))
            if level == 0.0:
                zero_err = max(zero_err, float(np.abs(e).max()))
        level_rows.append(float(level))

    cross_viol, worst = 0, 0.0
    for _ in range(pairs):
        level = float(rng.choice(xi_levels))
        qt, _ = polar_decompose(_perturbed_stiefel(rng, m, d, level))
        qj, pj = polar_decompose(_perturbed_stiefel(rng, m, d, level))
        ej = pj - eye
        cross = abs(float(np.sum(qt * (qj @ ej))))
        limit = np.sqrt(d) * float(np.linalg.norm(ej))
        worst = max(worst, cross - limit)
        if cross > limit + tol:
            cross_viol += 1
    return ValidationReport(
        name="polar", trials=pairs, seed=seed,
        statistics={"e_bound_violations": ineq_viol, "cross_violations": cross_viol,
                    "max_cross_slack": worst, "isometry_error": iso_err,
                    "zero_level_e_max": zero_err},
        bounds={"e": "||P^2 - I||_F", "cross": "sqrt(d) ||E_j||_F"},
        tolerance={"violation": tol, "isometry": tol, "zero_level": 1e-8},
        verdict=ineq_viol == 0 and cross_viol == 0 and iso_err <= tol and zero_err <= 1e-8,
        details={"dims": [m, d], "xi_levels": level_rows},
    )


def _perturbed_stiefel(rng, m, d, xi):
    """Matrix with ``||W^T W - I||_F^2`` close to ``xi``: singular values
    ``sqrt(1 + s_i)`` with ``sum s_i^2 = xi``."""
    u = sample_stiefel_batch(1, m, d, rng)[0]
    v = sample_stiefel_batch(1, d, d, rng)[0]
    s = rng.standard_normal(d)
    s *= np.sqrt(xi) / max(np.linalg.norm(s), 1e-300)
    s = np.maximum(s, -1.0)
    return (u * np.sqrt(1.0 + s)) @ v.T


def validate_directional_alignment(theta0, tau, dataset, min_cos=0.5, seed=None):
    """Consistency of per-sample Jacobians and their alignment with ``tau``.

    The ratio ``sigma_J^2 / ||mu_J||^2`` below 1 is read as the
    consistency assumption holding; only then is the mean cosine between
    ``J(x)`` and ``tau`` required to exceed ``min_cos``.
    """
    jac = net.jacobians(theta0, dataset.inputs, metrics.targets_for(theta0, dataset))
    mu = jac.mean(axis=0)
    sigma2 = float(np.mean(np.sum((jac - mu) ** 2, axis=1)))
    mu2 = float(np.sum(mu * mu))
    ratio = sigma2 / mu2 if mu2 > 0 else float("inf")
    t = tau.flat()
    tn = float(np.linalg.norm(t))
    jn = np.linalg.norm(jac, axis=1)
    ok = jn > 0
    mean_cos = float(np.mean(jac[ok] @ t / (jn[ok] * tn))) if tn > 0 and ok.any() else 0.0
    mu_cos = float(mu @ t / (np.sqrt(mu2) * tn)) if tn > 0 and mu2 > 0 else 0.0
    holds = ratio < 1.0
    return ValidationReport(
        name="alignment", trials=len(dataset), seed=seed,
        statistics={"consistency_ratio": ratio, "mean_cos": mean_cos, "mean_jacobian_cos": mu_cos,
                    "assumption_holds": holds},
        bounds={"ratio": 1.0, "mean_cos": min_cos},
        tolerance={"mean_cos": min_cos},
        verdict=(mean_cos > min_cos) if holds else True,
        details={"assertion": "checked" if holds else "skipped: assumption does not hold"},
    )


def _pairwise_first_layer_cross(w, sets):
    """Mean |entry| of the cross-task blocks of ``W W^T`` over input rows."""
    g = w @ w.T
    vals = []
    for i in range(len(sets)):
        for j in range(len(sets)):
            if i != j:
                vals.append(np.abs(g[np.ix_(sets[i], sets[j])]).mean())
    return float(np.mean(vals)) if vals else 0.0


def _interference_stats(theta0, run, suite):
    cos, gaps = [], []
    tids = list(suite)
    for t in tids:
        test = suite[t]["test"]
        scale = metrics.output_scale(run.thetas[t], test)
        for j in tids:
            if j == t:
                continue
            cos.append(metrics.interference(run.taus[j], theta0, test).mean_cos)
            gap = metrics.disentanglement_gap(theta0, run.taus[t], run.taus[j], test)
            gaps.append(gap / scale if scale > 0 else float("inf"))
    return cos, gaps


def validate_tfs_chain(experiment=None, seeds=(0, 1, 2), control=True):
    """Disjoint feature sets give disentangled task vectors.

    For each seed the suite of ``experiment`` (overlap forced to 0) is
    fine-tuned with ``lam = 0`` from a shared anchor. Asserts, for every
    ordered task pair, that the update mass on input rows outside the
    task's features is small, that the interference cosine is small and
    that the nonlinear disentanglement gap is small against the output
    scale. With ``control`` the same runs at overlap 1 must show an
    interference cosine more than ``CONTROL_RATIO_MIN`` times larger.
    """
    exp = (experiment or protocol.TFS_EXPERIMENT).with_overlap(0.0)
    per_seed = []
    worst = {"proxy_mass": 0.0, "interference_cos": 0.0, "gap_fraction": 0.0}
    ok = True
    cos_all = []
    for seed in seeds:
        suite, theta0, run = exp.train(seed, lam=0.0, min_accuracy=SINGLE_ACC_MIN)
        first = theta0.spec.layer_names[0]
        masses = []
        for tid, splits in suite.items():
            dw = run.taus[tid][first]
            outside = np.setdiff1d(np.arange(dw.shape[0]), splits["train"].feature_set)
            total = float(np.sum(dw * dw))
            masses.append(float(np.sum(dw[outside] ** 2)) / total if total > 0 else 0.0)
        cos, gaps = _interference_stats(theta0, run, suite)
        cos_all.extend(cos)
        sets = [s["train"].feature_set for s in suite.values()]
        merged = arith.merge(theta0, list(run.taus.values()))
        row = {"seed": seed, "single_test": run.single_test, "proxy_mass_max": max(masses),
               "interference_cos_max": max(cos), "gap_fraction_max": max(gaps),
               "block_cross_before": _pairwise_first_layer_cross(theta0[first], sets),
               "block_cross_after": _pairwise_first_layer_cross(merged[first], sets)}
        per_seed.append(row)
        worst["proxy_mass"] = max(worst["proxy_mass"], row["proxy_mass_max"])
        worst["interference_cos"] = max(worst["interference_cos"], row["interference_cos_max"])
        worst["gap_fraction"] = max(worst["gap_fraction"], row["gap_fraction_max"])
    ok = (worst["proxy_mass"] < PROXY_MASS_MAX and worst["interference_cos"] < INTERFERENCE_COS_MAX
          and worst["gap_fraction"] < GAP_FRACTION_MAX)
    stats = {f"max_{k}": v for k, v in worst.items()}
    stats["mean_interference_cos"] = float(np.mean(cos_all))
    if control:
        ctrl = exp.with_overlap(1.0)
        ctrl_cos = []
        for seed in seeds:
            suite, theta0, run = ctrl.train(seed, lam=0.0)
            ctrl_cos.extend(_interference_stats(theta0, run, suite)[0])
        ratio = float(np.mean(ctrl_cos)) / max(stats["mean_interference_cos"], 1e-300)
        stats["control_interference_cos"] = float(np.mean(ctrl_cos))
        stats["control_ratio"] = ratio
        ok = ok and ratio > CONTROL_RATIO_MIN
    return ValidationReport(
        name="tfs", trials=len(seeds), seed=list(seeds), statistics=stats,
        bounds={"proxy_mass": PROXY_MASS_MAX, "interference_cos": INTERFERENCE_COS_MAX,
                "gap_fraction": GAP_FRACTION_MAX, "control_ratio": CONTROL_RATIO_MIN,
                "single_accuracy": SINGLE_ACC_MIN},
        tolerance={}, verdict=bool(ok),
        details={"per_seed": per_seed, "experiment": exp.to_dict()},
    )


def validate_angle_control(experiment=None, seeds=(0, 1, 2), lambdas=protocol.LAMBDA_GRID,
                           negation=False, sweeps=None):
    """The penalty lowers task-vector cosines and raises merged accuracy.

    For each seed every task is trained at ``lam = 0`` and at each value of
    ``lambdas``; the lambda with the best merged validation accuracy is
    selected. Medians over seeds of the mean |cosine| between task vectors
    and of the alpha-searched normalized accuracy are compared against the
    ``lam = 0`` runs. With ``negation`` the mean target accuracy after
    negating each task (95% control constraint) is reported as well.
    ``sweeps`` optionally maps seed to an already computed ``Sweep`` of
    ``experiment`` so the training is not repeated.
    """
    exp = experiment or protocol.ANGLE_EXPERIMENT
    if exp.num_tasks < 2:
        raise ValueError("angle control needs at least 2 tasks")
    if len(seeds) < 3:
        raise ValueError("angle control needs at least 3 seeds")
    rows = []
    for seed in seeds:
        sw = sweeps[seed] if sweeps and seed in sweeps else exp.sweep(seed, lambdas)
        base, sel = sw.additions[0.0], sw.additions[sw.selected]
        row = {"seed": seed, "selected_lambda": sw.selected, "diverged": sw.diverged,
               "cos_lam0": base.mean_abs_cosine, "cos_selected": sel.mean_abs_cosine,
               "norm_acc_lam0": base.normalized_accuracy,
               "norm_acc_selected": sel.normalized_accuracy,
               "alpha_lam0": base.alpha, "alpha_selected": sel.alpha,
               "sweep": {str(k): {"cos": v.mean_abs_cosine, "norm_acc": v.normalized_accuracy,
                                  "val": v.val_objective, "alpha": v.alpha}
                         for k, v in sw.additions.items()}}
        if negation:
            row["negation_target_lam0"] = sw.negation_targets(0.0)[0]
            row["negation_target_selected"] = sw.negation_targets(sw.selected)[0]
        rows.append(row)
    keys = ["cos_lam0", "cos_selected", "norm_acc_lam0", "norm_acc_selected"]
    if negation:
        keys += ["negation_target_lam0", "negation_target_selected"]
    med = {k: float(np.median([r[k] for r in rows])) for k in keys}
    verdict = med["cos_selected"] < med["cos_lam0"] and med["norm_acc_selected"] > med["norm_acc_lam0"]
    return ValidationReport(
        name="angle-control", trials=len(seeds), seed=list(seeds),
        statistics={f"median_{k}": v for k, v in med.items()},
        bounds={"cos": "median_cos_selected < median_cos_lam0",
                "norm_acc": "median_norm_acc_selected > median_norm_acc_lam0"},
        tolerance={}, verdict=bool(verdict),
        details={"per_seed": rows, "experiment": exp.to_dict()},
    )

