import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("REGLAB_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "reglab._kernels",
                    ["src/reglab/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no -ffast-math: results must match the pure-Python path bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
