"""Build hook for the optional compiled SRP kernel.

The package works without the extension (a NumPy fallback is selected at
import time), so a missing compiler or Cython only costs speed.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "arraydiar._srp_core",
                ["src/arraydiar/_srp_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
