import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fallback build: pure Python only
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("GRAPH_UNLEARN_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "graph_unlearn._kernels",
                ["src/graph_unlearn/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
