import os

import numpy as np
from setuptools import Extension, setup

# Build the compiled kernels when Cython is importable; otherwise the package
# installs pure Python and otalign.kernels falls back to numpy.
ext_modules = []
if os.environ.get("OTALIGN_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        extensions = [
            Extension(
                "otalign._kernels",
                ["src/otalign/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
