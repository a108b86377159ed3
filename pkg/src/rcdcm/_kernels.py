"""Kernel backend selection: compiled extension if available, numpy otherwise.

RCDCM_PURE_PYTHON=1 forces the fallback (used by the backend-parity tests
and the kernel benchmark).
"""

import os

from . import _kernels_py

if os.environ.get("RCDCM_PURE_PYTHON"):
    impl = _kernels_py
else:
    try:
        from . import _kernels_cy as impl  # type: ignore[attr-defined]
    except ImportError:
        impl = _kernels_py

BACKEND = impl.BACKEND

eval_pwl_current = impl.eval_pwl_current
pwl_state_init = impl.pwl_state_init
pwl_state_eval = impl.pwl_state_eval
pwl_state_advance = impl.pwl_state_advance
convolution_currents = impl.convolution_currents
