"""Backend selection for the integration kernel.

The compiled ``_dopri`` extension is used when it imports; otherwise, or
when ``INFOEPI_PURE_PYTHON=1`` is set, the pure-Python ``_dopri_py``
stepper is used. Both expose ``dopri_run`` with the same contract.
"""

import os

from . import _dopri_py

SYSTEM_FULL = 0
SYSTEM_FAST = 1
SYSTEM_REDUCED = {"C00": 2, "C01": 3, "C02": 4}
SYSTEM_LINEAR = 5

BACKENDS = {"python": _dopri_py.dopri_run}

try:
    from . import _dopri as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["cython"] = _compiled.dopri_run

if os.environ.get("INFOEPI_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

dopri_run = BACKENDS[BACKEND]


def get(name=None):
    """Kernel function for ``name`` ("python" or "cython"); the active one by default."""
    if name is None:
        return dopri_run
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available; have {sorted(BACKENDS)}") from None
