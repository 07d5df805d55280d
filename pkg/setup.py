"""Build the optional Cython trajectory kernel.

If Cython or a C compiler is missing the package still installs and
falls back to the numpy implementation at import time; a failed compile
only warns because the extension is optional.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("MONITORED_CHAIN_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "monitored_chain._kernel",
                    ["src/monitored_chain/_kernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-fcx-limited-range"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
