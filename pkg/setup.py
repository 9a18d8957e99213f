"""Build script for the optional compiled kernels.

The package works without the extension: exitkit._kernels falls back to the
pure numpy implementation when the compiled module is absent or when
EXITKIT_PURE_PYTHON=1 is set.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "exitkit._kernels._ckernels",
        ["src/exitkit/_kernels/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
