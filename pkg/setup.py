"""Build the optional compiled Jacobi kernel.

When Cython or a C compiler is unavailable the package still installs and
falls back to the numpy implementation at import time.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("wips._jacobi_ext", ["src/wips/_jacobi_ext.pyx"], extra_compile_args=["-O3"])],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
