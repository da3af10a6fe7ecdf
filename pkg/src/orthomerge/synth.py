"""
Synthetic multi-task classification suites with known feature usage.

Task ``t`` reads the input coordinates in its feature set ``I_t``; its
labels are the argmax of a Gaussian class-template applied to those
coordinates plus Gaussian logit noise. In task ``t``'s domain the
coordinates outside ``I_t`` carry only background noise of the same
scale, so a suite with ``overlap_ratio == 0`` gives every task its own
disjoint slice of the input.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSpec, ZeroVariance

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SynthTaskSpec:
    """Suite layout.

    ``samples_per_task`` is the training-split size; validation and test
    splits get half as many samples each.
    """

    num_tasks: int
    input_dim: int
    features_per_task: int
    overlap_ratio: float = 0.0
    classes_per_task: int = 3
    samples_per_task: int = 400
    noise_std: float = 0.1
    seed: int = 0

    @property
    def shared_count(self):
        return int(round(self.overlap_ratio * self.features_per_task))

    @property
    def index_budget(self):
        return self.shared_count + self.num_tasks * (self.features_per_task - self.shared_count)

    def split_size(self, split):
        return self.samples_per_task if split == "train" else max(1, self.samples_per_task // 2)

    def validate(self):
        if self.num_tasks < 1 or self.features_per_task < 1 or self.classes_per_task < 2:
            raise InfeasibleSpec("need >= 1 task, >= 1 feature per task and >= 2 classes")
        if not 0.0 <= self.overlap_ratio <= 1.0:
            raise InfeasibleSpec(f"overlap ratio {self.overlap_ratio} outside [0, 1]")
        if self.samples_per_task < 1 or self.noise_std < 0:
            raise InfeasibleSpec("samples_per_task must be >= 1 and noise_std >= 0")
        if self.index_budget > self.input_dim:
            raise InfeasibleSpec(
                f"feature sets need {self.index_budget} input coordinates "
                f"but input_dim is {self.input_dim}"
            )

    def to_dict(self):
        return {
            "num_tasks": self.num_tasks,
            "input_dim": self.input_dim,
            "features_per_task": self.features_per_task,
            "overlap_ratio": self.overlap_ratio,
            "classes_per_task": self.classes_per_task,
            "samples_per_task": self.samples_per_task,
            "noise_std": self.noise_std,
            "seed": self.seed,
        }


@dataclass
class TaskDataset:
    task_id: str
    inputs: np.ndarray
    labels: np.ndarray
    feature_set: list
    split: str
    num_classes: int

    def __len__(self):
        return len(self.labels)

    def to_dict(self):
        return {
            "task_id": self.task_id,
            "split": self.split,
            "num_classes": self.num_classes,
            "feature_set": [int(i) for i in self.feature_set],
            "inputs": self.inputs.tolist(),
            "labels": [int(y) for y in self.labels],
        }

    @classmethod
    def from_dict(cls, d):
        inputs = np.asarray(d["inputs"], dtype=np.float64)
        labels = np.asarray(d["labels"], dtype=np.int64)
        return cls(
            task_id=d["task_id"],
            inputs=inputs.reshape(len(labels), -1),
            labels=labels,
            feature_set=list(d["feature_set"]),
            split=d.get("split", "train"),
            num_classes=int(d.get("num_classes", int(labels.max(initial=0)) + 1)),
        )


def task_id(t):
    return f"task{t}"


def feature_sets(spec):
    """Sorted input indices read by each task; shared indices come first."""
    shared = list(range(spec.shared_count))
    own = spec.features_per_task - spec.shared_count
    sets = []
    for t in range(spec.num_tasks):
        start = spec.shared_count + t * own
        sets.append(shared + list(range(start, start + own)))
    return sets


def class_template(spec, t):
    """Gaussian class template of task ``t``.

    Columns over the shared indices come from one suite-wide draw, so tasks
    that share input features also share what those features mean.
    """
    rng = np.random.default_rng([spec.seed, t, 0])
    g = rng.standard_normal((spec.classes_per_task, spec.features_per_task))
    k = spec.shared_count
    if k:
        g[:, :k] = np.random.default_rng([spec.seed, 1 << 20, 0]).standard_normal(
            (spec.classes_per_task, k))
    return g


def derive_labels(template, feature_set, inputs, logit_noise):
    scores = inputs[:, feature_set] @ template.T + logit_noise
    return np.argmax(scores, axis=1)


def _draw(spec, t, split):
    """Raw inputs and logit noise for one (task, split)."""
    rng = np.random.default_rng([spec.seed, t, 1 + SPLITS.index(split)])
    n, m = spec.split_size(split), spec.input_dim
    x = spec.noise_std * rng.standard_normal((n, m))
    idx = feature_sets(spec)[t]
    x[:, idx] = rng.standard_normal((n, len(idx)))
    noise = spec.noise_std * rng.standard_normal((n, spec.classes_per_task))
    return x, noise


def generate_suite(spec):
    """All (task, split) datasets of a suite, unstandardized.

    Returns a dict ``{task_id: {split: TaskDataset}}``; deterministic in
    ``spec.seed``.
    """
    spec.validate()
    sets = feature_sets(spec)
    suite = {}
    for t in range(spec.num_tasks):
        template = class_template(spec, t)
        tid = task_id(t)
        suite[tid] = {}
        for split in SPLITS:
            x, noise = _draw(spec, t, split)
            y = derive_labels(template, sets[t], x, noise)
            suite[tid][split] = TaskDataset(tid, x, y, sets[t], split, spec.classes_per_task)
    return suite


def standardize(suite):
    """Center and scale every coordinate with pooled training statistics.

    The statistics come from the union of all tasks' training splits (the
    mixed input distribution the shared trunk sees); validation and test
    splits reuse them. Constant coordinates are only centered and reported
    through a :class:`ZeroVariance` warning.

    Returns a new suite dict and the ``(mean, std)`` used.
    """
    train = np.concatenate([splits["train"].inputs for splits in suite.values()])
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    flat = np.flatnonzero(std <= 1e-12 * max(1.0, float(np.abs(mean).max(initial=0.0))))
    if flat.size:
        warnings.warn(f"zero-variance coordinates left centered only: {flat.tolist()}", ZeroVariance)
    scale = std.copy()
    scale[flat] = 1.0
    out = {}
    for tid, splits in suite.items():
        out[tid] = {}
        for split, ds in splits.items():
            x = (ds.inputs - mean) / scale
            out[tid][split] = TaskDataset(ds.task_id, x, ds.labels.copy(), list(ds.feature_set),
                                          ds.split, ds.num_classes)
    return out, (mean, scale)


def standardized_suite(spec):
    return standardize(generate_suite(spec))[0]
