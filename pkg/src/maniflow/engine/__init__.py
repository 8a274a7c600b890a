"""Tape engine selection.

The compiled engine is used when the extension built; the pure-Python
engine is the fallback. Override with MANIFLOW_ENGINE=py|cy.
"""

import os

from .tape_py import PyTape
from .var import Var

_forced = os.environ.get("MANIFLOW_ENGINE", "").strip().lower()

CyTape = None
if _forced != "py":
    try:
        from ._tape_cy import CyTape  # type: ignore[no-redef]
    except ImportError:
        CyTape = None
        if _forced == "cy":
            raise ImportError(
                "MANIFLOW_ENGINE=cy but the compiled engine is not built; "
                "reinstall with a working C toolchain or unset the variable"
            )

if _forced == "py" or CyTape is None:
    Tape = PyTape
    ENGINE = "py"
else:
    Tape = CyTape
    ENGINE = "cy"


def available_engines():
    out = {"py": PyTape}
    if CyTape is not None:
        out["cy"] = CyTape
    return out


__all__ = ["Tape", "PyTape", "CyTape", "Var", "ENGINE", "available_engines"]
