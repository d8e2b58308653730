"""Build script: compiles the optional Cython kernel extension.

If Cython or a C compiler is unavailable the install still succeeds and the
package falls back to the pure NumPy kernels at import time.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "blockfill._kernels._ckernels",
                ["src/blockfill/_kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"blockfill: skipping compiled kernels ({exc}); pure NumPy fallback will be used")

setup(ext_modules=ext_modules)
