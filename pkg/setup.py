"""Build script for the optional compiled propagation kernel.

The package works without the extension: ``aolcorr.kernels`` falls back to a
pure-Python implementation at import time if ``aolcorr.kernels._native`` is
missing. The extension is only an accelerator, so a failed compile downgrades
to a warning instead of aborting the install.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler / toolchain breakage
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        warnings.warn(
            f"building the native propagation kernel failed ({exc}); "
            "aolcorr will use the pure-Python fallback",
            stacklevel=1,
        )


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "aolcorr.kernels._native",
        ["src/aolcorr/kernels/_native.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
