"""Build script: compiles the Cython tape engine.

The extension is optional: if compilation fails the package still installs
and falls back to the pure-Python engine at import time.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/maniflow/engine/_tape_cy.pyx"],
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False, "cdivision": True},
    )
    include_dirs = [numpy.get_include()]
except Exception as exc:  # pragma: no cover - degraded environments only
    print(f"warning: skipping Cython engine build ({exc}); pure-Python engine will be used")
    ext_modules = []
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
