import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the package falls back at import
    cythonize = None

openmp = os.environ.get("VECCHIA_OPENMP", "1") != "0"

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "vecchia._core",
        ["src/vecchia/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"] + (["-fopenmp"] if openmp else []),
        extra_link_args=["-fopenmp"] if openmp else [],
        optional=True,
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
