"""numba-compiled twins of the loop kernels in kernels.py.

The loop bodies are compiled verbatim so both backends run identical
per-trajectory arithmetic; nogil lets a thread pool scale ensembles.
"""
import numba

from .kernels import _effective_batch_loop, _effective_path_loop, _sme_path_loop

_jit = numba.njit(cache=True, nogil=True)

effective_path = _jit(_effective_path_loop)
effective_batch = _jit(_effective_batch_loop)
sme_path = _jit(_sme_path_loop)
