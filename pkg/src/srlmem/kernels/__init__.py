"""Distance kernels for the retrieval stage.

The index build computes edit distances between every query/candidate pair
of POS id sequences, an O(corpus^2 * len^2) scalar loop. A compiled Cython
kernel is used when the extension built; otherwise a pure-Python fallback
with identical semantics is selected at import time. `BACKEND` records
which one is active; `benchmarks/bench_kernels.py` compares the two.
"""

from . import _pykernels

try:
    from . import _ckernels as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _pykernels

    BACKEND = "pure"

levenshtein = _impl.levenshtein
levenshtein_many = _impl.levenshtein_many

pure = _pykernels

__all__ = ["BACKEND", "levenshtein", "levenshtein_many", "pure"]
