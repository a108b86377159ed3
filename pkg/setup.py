"""Build the optional Cython kernel extension.

Set RCDCM_SKIP_EXT=1 to install without the compiled kernels; the package
falls back to the pure numpy implementation at import time.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("RCDCM_SKIP_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "rcdcm._kernels_cy",
                    ["src/rcdcm/_kernels_cy.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
