import os

import numpy as np
from setuptools import Extension, setup

# RABIFLOW_NO_EXT=1 installs the pure-Python fallback only.
ext_modules = []
if not os.environ.get("RABIFLOW_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "rabiflow._ckernels",
                ["src/rabiflow/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
