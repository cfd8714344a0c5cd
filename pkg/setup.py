"""Build the optional compiled kernels; the package works without them."""

import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("CONSENSUS_LAB_PURE_PYTHON"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "consensus_lab._kernels",
        ["src/consensus_lab/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions())
