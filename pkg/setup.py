"""Build script: compiles the optional Cython stepper core.

The package works without the extension (a pure-numpy fallback is selected at
import time), so build failures here are downgraded to warnings.
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible; fall back to pure Python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            warnings.warn(f"stepper extension not built ({exc}); "
                          "pure-Python backend will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"stepper extension {ext.name} failed to build "
                          f"({exc}); pure-Python backend will be used")


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        warnings.warn(f"Cython/numpy unavailable ({exc}); "
                      "building without the compiled stepper core")
        return []
    from setuptools import Extension

    ext = Extension(
        "collapsim._steppers._core",
        sources=["src/collapsim/_steppers/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        language="c",
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
