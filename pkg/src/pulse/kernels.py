"""Backend selection for the hot loops.

The compiled extension is used when it was built; set ``PULSE_PURE_PYTHON=1``
to force the Python versions.
"""

import os

from . import _kernels_py

BACKEND = "python"
run_loop = _kernels_py.run_loop
best_split = _kernels_py.best_split

if not os.environ.get("PULSE_PURE_PYTHON"):
    try:
        from . import _kernels as _ext
    except ImportError:
        _ext = None
    else:
        run_loop = _ext.run_loop
        best_split = _ext.best_split
        BACKEND = "cython"
