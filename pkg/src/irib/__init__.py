"""Projector training for extreme blind image restoration via an information bottleneck."""

import os as _os

__version__ = "0.1.0"

# IRIB_THREADS caps BLAS/OpenMP parallelism. It only takes effect when irib is
# imported before numpy initialises its thread pools.
_threads = _os.environ.get("IRIB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
