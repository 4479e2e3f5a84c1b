"""Builds the optional compiled activation kernels; the package works without them."""
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("rkrfm._ckernels", ["src/rkrfm/_ckernels.pyx"], extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
