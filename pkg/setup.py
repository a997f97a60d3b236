"""Build script for the optional compiled kernel core.

The package works without the extension (a pure-Python twin of every kernel
ships in ``trafeq._kernels._pure``); building it just makes the solver inner
loops fast.  If Cython or a C compiler is unavailable the install falls back
to the pure backend.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "trafeq._kernels._core",
                ["src/trafeq/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
