"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``BSDEREP_PURE_PYTHON`` is set to a non-empty value, the
numpy fallback is used.  Both expose the same three functions.
"""

import os

from . import _fallback

if os.environ.get("BSDEREP_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"

_impl = _compiled if _compiled is not None else _fallback

normal_block = _impl.normal_block
first_passage = _impl.first_passage


def pde_march(u, x, ds, t_end, n_t, barrier, y, z, b0, code, params, snap_every, g=None):
    # arbitrary Python generators cannot run inside the compiled loop
    if g is not None or _compiled is None:
        return _fallback.pde_march(u, x, ds, t_end, n_t, barrier, y, z, b0, code, params,
                                   snap_every, g)
    return _compiled.pde_march(u, x, ds, t_end, n_t, barrier, y, z, b0, code, params, snap_every)


def backend_module(name):
    """Return the kernel module for ``name`` ('python' or 'cython')."""
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
