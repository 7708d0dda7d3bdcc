"""Build script: compiles the Cython kernel extension when the toolchain is
available; the package falls back to the pure-numpy kernels otherwise."""

import os

from setuptools import setup

PYX = "src/sflda/_kernels/_core.pyx"

ext_modules = []
try:
    if not os.path.exists(PYX):
        raise ImportError(f"{PYX} not present")
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "sflda._kernels._core",
                [PYX],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
