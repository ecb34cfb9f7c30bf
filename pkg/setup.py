"""Builds the optional compiled kernel extension.

The package works without it (pure-numpy fallback is selected at import);
building it gives the fast strict-order kernels.
"""
from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    # -ffp-contract=off / -mno-fma: the kernels promise one rounded multiply
    # and one rounded add per accumulation step; fused multiply-add would
    # change the bits and break the oracle-equality tests.
    extensions = cythonize(
        [
            Extension(
                "tdcnn._backend._ckernels",
                ["src/tdcnn/_backend/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=[
                    "-O3",
                    "-march=native",
                    "-mno-fma",
                    "-ffp-contract=off",
                ],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
