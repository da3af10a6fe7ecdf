"""
File formats: checkpoints, per-split datasets, CSV tables and run
manifests. Every write goes through a temporary file in the target
directory followed by an atomic rename.

Floats are written with Python's shortest round-trip representation, so
reading a file back reproduces every value bit for bit.
"""

import csv
import hashlib
import io as _io
import json
import os
import platform
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .arith import TaskVector
from .net import ModelSpec, ParameterSet
from .synth import TaskDataset


def atomic_write(path, data):
    """Write ``data`` (str or bytes) to ``path`` via temp file + rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=False, allow_nan=True) + "\n"


def write_json(path, obj):
    atomic_write(path, dumps(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def checkpoint_dict(params):
    meta = dict(params.meta)
    out_meta = {"seed": meta.pop("seed", None), "lambda": meta.pop("lambda", None),
                "task_id": meta.pop("task_id", None)}
    out_meta.update({k: v for k, v in meta.items() if k in ("kind", "alphas")})
    return {
        "spec": params.spec.to_dict(),
        "layers": [
            {"name": name, "rows": int(w.shape[0]), "cols": int(w.shape[1]),
             "data": [float(v) for v in w.ravel()]}
            for name, w in params.items()
        ],
        "meta": out_meta,
    }


def from_checkpoint_dict(d):
    spec = ModelSpec.from_dict(d["spec"])
    layers = {}
    for entry in d["layers"]:
        w = np.asarray(entry["data"], dtype=np.float64)
        layers[entry["name"]] = w.reshape(int(entry["rows"]), int(entry["cols"]))
    meta = dict(d.get("meta", {}))
    if meta.get("kind") == "task_vector":
        return TaskVector(spec, layers, meta, meta.get("task_id") or "")
    return ParameterSet(spec, layers, meta)


def save_checkpoint(path, params):
    write_json(path, checkpoint_dict(params))


def load_checkpoint(path):
    return from_checkpoint_dict(read_json(path))


def save_dataset(path, dataset):
    write_json(path, dataset.to_dict())


def load_dataset(path):
    return TaskDataset.from_dict(read_json(path))


def dataset_filename(task_id, split):
    return f"{task_id}_{split}.json"


def csv_text(header, rows):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    atomic_write(path, csv_text(header, rows))


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config):
    """SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _versions():
    from . import __version__
    import matplotlib

    return {"orthomerge": __version__, "numpy": np.__version__,
            "matplotlib": matplotlib.__version__, "python": platform.python_version()}


@dataclass
class RunManifest:
    command: list
    config: dict
    config_hash: str
    seeds: list
    inputs: list
    outputs: list
    versions: dict = field(default_factory=_versions)
    wall_clock: dict = field(default_factory=dict)

    @classmethod
    def start(cls, config, seeds=(), inputs=(), argv=None):
        m = cls(command=list(sys.argv[1:] if argv is None else argv), config=config,
                config_hash=config_hash(config), seeds=list(seeds),
                inputs=[{"path": os.fspath(p), "sha256": file_digest(p)} for p in inputs],
                outputs=[])
        m.wall_clock = {"started": time.time()}
        return m

    def add_output(self, path):
        self.outputs.append({"path": os.fspath(path), "sha256": file_digest(path)})

    def write(self, path):
        self.wall_clock["finished"] = time.time()
        self.wall_clock["elapsed_s"] = self.wall_clock["finished"] - self.wall_clock.get(
            "started", self.wall_clock["finished"])
        write_json(path, asdict(self))


def strip_wall_clock(manifest):
    """Manifest dict without the fields that legitimately change per run."""
    return {k: v for k, v in manifest.items() if k != "wall_clock"}
