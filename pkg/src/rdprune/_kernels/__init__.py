"""Kernel backend selection.

The compiled Cython extension is preferred when present; the numpy fallback
is always available. ``RDPRUNE_KERNELS`` overrides: ``compiled``, ``python``
or ``auto`` (default).
"""

import os

from . import pyfallback

_choice = os.environ.get("RDPRUNE_KERNELS", "auto").lower()

if _choice == "python":
    impl = pyfallback
elif _choice == "compiled":
    from . import _fast as impl  # noqa: F401  (raises if not built)
else:
    try:
        from . import _fast as impl
    except ImportError:
        impl = pyfallback

BACKEND = impl.BACKEND

conv2d_forward = impl.conv2d_forward
dp_relax_row = impl.dp_relax_row
dp_relax_row_ternary = impl.dp_relax_row_ternary
