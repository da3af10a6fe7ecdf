"""
End-to-end experiment drivers: train every task of a suite from a shared
anchor, merge with a uniform coefficient, negate, and pick the penalty
strength.
"""

import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import arith, metrics, net, synth
from .errors import DivergenceDetected, TrainingFailed, ZeroVariance
from .finetune import OrthoConfig, TrainConfig, finetune_task, pretrain_anchor

LAMBDA_GRID = (0.1, 1.0, 10.0, 100.0)


def model_spec_for(suite_spec, hidden_dims, seed=0):
    heads = tuple((f"task{t}", suite_spec.classes_per_task) for t in range(suite_spec.num_tasks))
    return net.ModelSpec(
        input_dim=suite_spec.input_dim,
        hidden_dims=tuple(hidden_dims),
        num_classes=suite_spec.num_tasks * suite_spec.classes_per_task,
        seed=seed,
        heads=heads,
    )


def build_anchor(model_spec, suite, pretrain=None):
    """Random init, or joint pre-training on the training splits when a
    ``TrainConfig`` is given."""
    if pretrain is None or pretrain.epochs == 0:
        return net.init_params(model_spec)
    return pretrain_anchor(model_spec, {t: s["train"] for t, s in suite.items()}, pretrain)


@dataclass
class SuiteRun:
    lam: float
    thetas: dict
    taus: dict
    histories: dict
    single_val: dict
    single_test: dict


def train_suite(theta0, suite, ortho=OrthoConfig(), train=TrainConfig(), min_accuracy=None):
    """Fine-tune every task of ``suite`` from ``theta0``.

    Raises TrainingFailed when ``min_accuracy`` is given and some
    specialist's test accuracy falls below it.
    """
    thetas, taus, hist, sval, stest = {}, {}, {}, {}, {}
    for i, (tid, splits) in enumerate(suite.items()):
        cfg = TrainConfig(train.epochs, train.lr, train.batch_size, train.seed * 1000 + i,
                          train.optimizer, train.momentum)
        theta, h = finetune_task(theta0, splits["train"], splits["val"], ortho, cfg, tid)
        thetas[tid], hist[tid] = theta, h
        taus[tid] = arith.extract(theta0, theta, tid)
        sval[tid] = metrics.accuracy(theta, splits["val"])
        stest[tid] = metrics.accuracy(theta, splits["test"])
        if min_accuracy is not None and stest[tid] < min_accuracy:
            raise TrainingFailed(
                f"{tid}: single-task accuracy {stest[tid]:.3f} < {min_accuracy} (lambda={ortho.lam})"
            )
    return SuiteRun(float(ortho.lam), thetas, taus, hist, sval, stest)


@dataclass
class AdditionResult:
    alpha: float
    val_objective: float
    table: list
    merged_test: dict
    normalized_accuracy: float
    abs_accuracy: float
    mean_abs_cosine: float = field(default=float("nan"))


def addition(theta0, run, suite, alphas=arith.ALPHA_GRID):
    """Uniform-alpha task addition, alpha picked by mean validation accuracy."""
    tids = list(run.taus)
    taus = [run.taus[t] for t in tids]

    def evaluate(alpha):
        merged = arith.merge(theta0, taus, alpha)
        accs = {t: metrics.accuracy(merged, suite[t]["val"]) for t in tids}
        return float(np.mean(list(accs.values()))), accs

    alpha, table = arith.grid_search_alpha(evaluate, alphas)
    best = next(r for r in table if r.alpha == alpha)
    merged = arith.merge(theta0, taus, alpha)
    test = {t: metrics.accuracy(merged, suite[t]["test"]) for t in tids}
    norm = metrics.normalized_accuracy([test[t] for t in tids], [run.single_test[t] for t in tids])
    cos = arith.mean_abs_offdiag(arith.cosine_similarity_matrix(taus)) if len(taus) > 1 else 0.0
    return AdditionResult(alpha, best.objective, table, test, norm,
                          float(np.mean(list(test.values()))), cos)


@dataclass
class NegationResult:
    target: str
    alpha: float
    target_test: float
    control_test: float
    control_baseline: float
    table: list


def negation(theta0, run, suite, target, threshold=0.95, alphas=arith.ALPHA_GRID):
    """Negate ``target``'s vector; the control is the mean accuracy over the
    remaining tasks. Selection runs on validation data against the anchor's
    own control accuracy; reported numbers are on test data."""
    controls = [t for t in suite if t != target]
    tau = run.taus[target]

    def control_acc(params, split):
        return float(np.mean([metrics.accuracy(params, suite[t][split]) for t in controls]))

    baseline_val = control_acc(theta0, "val")
    table = []
    for a in alphas:
        model = arith.negate(theta0, tau, a)
        accs = {"target": metrics.accuracy(model, suite[target]["val"]),
                "control": control_acc(model, "val")}
        table.append(arith.AlphaRow(float(a), -accs["target"], accs))
    row = arith.select_negation(table, baseline_val, threshold)
    alpha = row.alpha if row is not None else 0.0
    model = arith.negate(theta0, tau, alpha)
    return NegationResult(target, alpha, metrics.accuracy(model, suite[target]["test"]),
                          control_acc(model, "test"), control_acc(theta0, "test"), table)


def select_lambda(results):
    """Pick the lambda whose merged model has the best validation objective.

    ``results`` maps lambda -> AdditionResult. Ties go to the smaller lambda.
    """
    best = None
    for lam in sorted(results):
        if best is None or results[lam].val_objective > results[best].val_objective:
            best = lam
    return best


@dataclass(frozen=True)
class Experiment:
    """A complete, seed-parametrized synthetic experiment: suite layout,
    anchor, fine-tuning schedule and update parametrization."""

    num_tasks: int = 4
    input_dim: int = 20
    features_per_task: int = 8
    overlap_ratio: float = 0.5
    classes_per_task: int = 3
    samples_per_task: int = 400
    noise_std: float = 0.1
    hidden_dims: tuple = (8,)
    pretrain_epochs: int = 0
    pretrain_lr: float = 0.01
    epochs: int = 100
    lr: float = 0.003
    batch_size: int = 32
    update_mode: str = "full"
    rank: int = None
    regularized_layers: tuple = None
    tuned_layers: tuple = None

    def with_overlap(self, rho):
        return replace(self, overlap_ratio=float(rho))

    def suite_spec(self, seed):
        return synth.SynthTaskSpec(self.num_tasks, self.input_dim, self.features_per_task,
                                   self.overlap_ratio, self.classes_per_task,
                                   self.samples_per_task, self.noise_std, seed)

    def ortho(self, lam):
        return OrthoConfig(lam, self.regularized_layers, self.update_mode, self.rank,
                           self.tuned_layers)

    def setup(self, seed):
        """Standardized suite and anchor for ``seed``."""
        sspec = self.suite_spec(seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ZeroVariance)
            suite = synth.standardized_suite(sspec)
        pre = (TrainConfig(self.pretrain_epochs, self.pretrain_lr, self.batch_size, seed)
               if self.pretrain_epochs else None)
        theta0 = build_anchor(model_spec_for(sspec, self.hidden_dims, seed), suite, pre)
        return suite, theta0

    def train_config(self, seed):
        return TrainConfig(self.epochs, self.lr, self.batch_size, seed)

    def train(self, seed, lam=0.0, min_accuracy=None):
        suite, theta0 = self.setup(seed)
        run = train_suite(theta0, suite, self.ortho(lam), self.train_config(seed), min_accuracy)
        return suite, theta0, run

    def sweep(self, seed, lambdas=LAMBDA_GRID):
        """Train at lam = 0 and at every lambda in ``lambdas``; merge each.

        A lambda whose training diverges is recorded in ``diverged`` and
        left out of the selection; the plain run at lam = 0 must succeed.
        """
        suite, theta0 = self.setup(seed)
        runs, adds, diverged = {}, {}, []
        for lam in (0.0,) + tuple(float(v) for v in lambdas):
            try:
                runs[lam] = train_suite(theta0, suite, self.ortho(lam), self.train_config(seed))
            except DivergenceDetected:
                if lam == 0.0:
                    raise
                diverged.append(lam)
                continue
            adds[lam] = addition(theta0, runs[lam], suite)
        candidates = {k: v for k, v in adds.items() if k > 0}
        if not candidates:
            raise TrainingFailed(f"every lambda in {tuple(lambdas)} diverged")
        return Sweep(seed, suite, theta0, runs, adds, select_lambda(candidates), diverged)

    def to_dict(self):
        d = asdict(self)
        for k in ("hidden_dims", "regularized_layers", "tuned_layers"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("hidden_dims", "regularized_layers", "tuned_layers"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class Sweep:
    seed: int
    suite: dict
    theta0: object
    runs: dict
    additions: dict
    selected: float
    diverged: list = field(default_factory=list)

    def negation_targets(self, lam, threshold=0.95):
        """Mean target-task test accuracy after negating each task in turn."""
        res = [negation(self.theta0, self.runs[lam], self.suite, t, threshold) for t in self.suite]
        return float(np.mean([r.target_test for r in res])), res


# Feature-specialization chain: disjoint features, briefly pre-trained
# anchor, plain fine-tuning.
TFS_EXPERIMENT = Experiment(num_tasks=2, overlap_ratio=0.0, samples_per_task=1000, hidden_dims=(32,),
                            pretrain_epochs=1, epochs=40, lr=0.005, batch_size=64)

# Penalty study: half-shared features, jointly pre-trained anchor, rank-4
# updates with the penalty on the hidden layer only.
ANGLE_EXPERIMENT = Experiment(num_tasks=4, overlap_ratio=0.5, hidden_dims=(8,), pretrain_epochs=3,
                              epochs=100, lr=0.003, update_mode="low_rank", rank=4,
                              regularized_layers=("hidden0",))
