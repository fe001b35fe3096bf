import os

import numpy as np
from setuptools import Extension, setup

# ARELU_NO_EXT=1 skips the compiled kernels; the package then runs on its numpy fallback.
ext_modules = []
if not os.environ.get("ARELU_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "arelu._ckernels",
                ["src/arelu/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
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

setup(ext_modules=ext_modules)
