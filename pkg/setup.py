"""Build script for the compiled numerical core.

The kernel is written in Cython pure-Python mode: src/powersplit/_kernel.py is
both a valid Python module (the fallback) and the Cython source for the C
extension. When the extension builds, the .so shadows the .py at import time;
when it does not, the same file runs interpreted. No fast-math or
architecture-specific flags: compiled and interpreted results must match
bit for bit.
"""
from setuptools import setup
from Cython.Build import cythonize

setup(
    ext_modules=cythonize(
        ["src/powersplit/_kernel.py"],
        compiler_directives={"language_level": "3"},
    ),
)
