"""Build script for the optional compiled jet kernel.

The package is pure Python plus one optional Cython extension that fuses the
MLP jet recursion and its reverse sweep.  If the extension cannot be built
(no compiler, no Cython) the install still succeeds and the package falls
back to the tape-composed implementation at import time.
"""

import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None and os.path.exists("src/mfglab/backends/_jetcore.pyx"):
    ext = Extension(
        "mfglab.backends._jetcore",
        sources=["src/mfglab/backends/_jetcore.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
