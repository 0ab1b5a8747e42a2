"""Backend selection for the hot loops.

The compiled extension ``seqalloc._ckernels`` is used when it imports;
otherwise the NumPy implementation in ``seqalloc._pykernels`` is used.
Set ``SEQALLOC_BACKEND=python`` to force the fallback.
"""

import logging
import os

from seqalloc import _pykernels

log = logging.getLogger(__name__)


def _load_compiled():
    try:
        from seqalloc import _ckernels
    except ImportError as exc:
        log.debug("compiled kernels unavailable: %s", exc)
        return None
    return _ckernels


compiled = _load_compiled()
python = _pykernels

if os.environ.get("SEQALLOC_BACKEND", "").lower() == "python" or compiled is None:
    _active = _pykernels
else:
    _active = compiled

NAME = _active.NAME
alloc_from_dual = _active.alloc_from_dual
bisect = _active.bisect
n_iterations = _active.n_iterations
sequential_episode = _active.sequential_episode


def available():
    """Names of the importable backends."""
    return [m.NAME for m in (compiled, python) if m is not None]


def get(name):
    """Return the kernel module called ``name`` ("cython" or "python")."""
    for mod in (compiled, python):
        if mod is not None and mod.NAME == name:
            return mod
    raise LookupError(f"kernel backend {name!r} is not available")
