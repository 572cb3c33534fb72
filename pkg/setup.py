from setuptools import setup, Extension

ext_modules = []
try:
    from Cython.Build import cythonize
    import numpy as np

    ext = Extension(
        "beamkam._kernels._core",
        ["src/beamkam/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    # Pure-Python fallback kernels are selected at import time; the package
    # works without the compiled core.
    pass

setup(ext_modules=ext_modules)
