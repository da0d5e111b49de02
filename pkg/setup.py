from setuptools import Extension, setup

import numpy as np

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext = Extension(
    "imarl.nn._kernels",
    ["src/imarl/nn/_kernels.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3", "-ffast-math"],
)

if cythonize is not None:
    ext_modules = cythonize([ext], language_level=3)
else:
    # Build without Cython is unsupported; the package still works through
    # the NumPy kernel fallback selected at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
