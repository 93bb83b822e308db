import os

from setuptools import setup
from setuptools.extension import Extension

ext_modules = []
if not os.environ.get("FLDTRANSFER_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        import numpy

        ext_modules = cythonize(
            [
                Extension(
                    "fldtransfer._kernels",
                    ["src/fldtransfer/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
