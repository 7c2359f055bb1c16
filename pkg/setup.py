"""Build the compiled kernel extension.

The package works without it (a numpy fallback is selected at import);
compiling just makes the hot loops fast.  To rebuild in place:

    python setup.py build_ext --inplace
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "adisep._kernels._core",
        ["src/adisep/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        # -ffp-contract=off keeps results bit-identical to the numpy
        # fallback (no FMA contraction of a*b+c).
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
