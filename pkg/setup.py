"""Build the optional Cython kernels.

The package works without them; ``proxy_align.kernels`` falls back to numpy
implementations when the extension is missing.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PROXY_ALIGN_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "proxy_align._kernels",
                    ["src/proxy_align/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
