"""Hot-loop kernels for the Gibbs sweep.

The compiled Cython core is used when present; the pure-NumPy fallback
implements identical semantics.  Selection happens at import and can be
forced with PANELMIX_KERNELS=py|c.  The two backends agree to floating-point
roundoff (see tests/test_backends.py) but are not guaranteed bit-identical;
the active backend name is recorded in output provenance.
"""

import os

from panelmix._kernels import _py

BACKEND = "py"
_impl = _py

_forced = os.environ.get("PANELMIX_KERNELS", "").strip().lower()
if _forced not in ("py",):
    try:
        from panelmix._kernels import _core

        BACKEND = "c"
        _impl = _core
    except ImportError:
        if _forced == "c":
            raise ImportError(
                "PANELMIX_KERNELS=c requested but the compiled kernel module "
                "is unavailable; reinstall with the extension built"
            ) from None

mixture_loglik = _impl.mixture_loglik
categorical_rows = _impl.categorical_rows
lambda_draw = _impl.lambda_draw
sse_quad = _impl.sse_quad
l_rwmh_vec = _impl.l_rwmh_vec


def get_backend(name: str):
    """Return the module implementing the named backend ('py' or 'c')."""
    if name == "py":
        return _py
    if name == "c":
        from panelmix._kernels import _core

        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
