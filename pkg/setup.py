"""Build script: compiles the hot-loop extension when Cython is available.

The package works without the extension (qefilt._kernels_py is a pure
NumPy implementation of the same kernel API), so a missing compiler or
Cython only costs speed, not functionality.
"""
import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    # Plain -O3: no -ffast-math / -march=native, the kernels must stay IEEE
    # so both backends agree to rounding error.
    ext_modules = cythonize(
        [
            Extension(
                "qefilt._kernels",
                ["src/qefilt/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
