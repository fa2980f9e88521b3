"""Build hook for the optional compiled kernels.

The package works without them; when Cython or a compiler is missing the
extension is skipped and the numpy kernels are used at import.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("CHAOSLAB_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "chaoslab._kernels",
                    ["src/chaoslab/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
