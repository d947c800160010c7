"""Build the optional Cython kernel extension.

If Cython or a C compiler is unavailable the package still installs and
falls back to the numpy kernels in ``clusterdr._pykernels``.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("CLUSTERDR_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        extensions = [
            Extension(
                "clusterdr._ckernels",
                ["src/clusterdr/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # no fast-math and no FMA contraction: results must match the
                # numpy fallback bit for bit
                extra_compile_args=["-O2", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
