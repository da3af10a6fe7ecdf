"""Task arithmetic with orthogonality-regularized fine-tuning on small
synthetic multi-task networks."""

import os

# BLAS thread counts must be fixed before numpy loads; one thread keeps
# reductions in a fixed order so repeated runs are bit-identical.
_threads = os.environ.get("ORTHOMERGE_THREADS")
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    if _threads is not None:
        os.environ[_var] = _threads
    else:
        os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
