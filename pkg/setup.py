"""Build script for the optional compiled kernels.

The package is pure Python except for dissipic._kernels._fast, a Cython
extension accelerating the implicit-layer fixed point and controller
integration steps. The extension is optional: if it fails to build or
import, the numpy fallback in dissipic._kernels._py is used instead.
"""
from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "dissipic._kernels._fast",
                ["src/dissipic/_kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
