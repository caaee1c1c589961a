"""Coverage-kernel backend selection.

The compiled extension is preferred when importable; otherwise (or when
CONFTUNER_PURE_PYTHON is set to a non-empty value other than "0") the
NumPy implementation is used. Both expose count_new and mark_row with
identical semantics.
"""

import os

from . import _coverage_py

backend_name = "python"
count_new = _coverage_py.count_new
mark_row = _coverage_py.mark_row

if os.environ.get("CONFTUNER_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _coverage as _compiled
    except ImportError:
        _compiled = None
    if _compiled is not None:
        backend_name = "compiled"
        count_new = _compiled.count_new
        mark_row = _compiled.mark_row


def available_backends() -> dict:
    """Importable backends by name; always includes "python"."""
    backends = {"python": _coverage_py}
    try:
        from . import _coverage as compiled
        backends["compiled"] = compiled
    except ImportError:
        pass
    return backends
