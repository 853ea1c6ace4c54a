import os

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize
    import numpy
except ImportError:
    cythonize = None

if cythonize is not None and os.environ.get("ATTESTBENCH_NO_EXT") != "1":
    ext = Extension(
        "attestbench._kernels",
        ["src/attestbench/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], compiler_directives={"language_level": 3})

setup(ext_modules=ext_modules)
