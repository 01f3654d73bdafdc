import os

import numpy as np
from setuptools import Extension, setup

# CTXPROP_NO_EXT=1 skips the compiled core; the package then runs on the
# pure-Python kernels.
ext_modules = []
if not os.environ.get("CTXPROP_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "ctxprop._kernels._core",
                ["src/ctxprop/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                # no fast-math / FMA contraction: results must match the
                # pure-Python kernels bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
