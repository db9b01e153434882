"""Build the optional Cython kernel; the package falls back to pure Python without it."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SVMPOOL_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "svmpool._dcd",
                    ["src/svmpool/_dcd.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
