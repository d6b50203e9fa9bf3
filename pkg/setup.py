"""Build script for the optional compiled CTC kernels.

The package is pure Python plus one Cython extension holding the hot CTC
loops (forward-backward and prefix scoring). If Cython or a C compiler is
unavailable the build falls back to the numpy reference kernels selected at
import time, so the extension is strictly optional.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible; warn instead of failing otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"WARNING: building the compiled CTC kernels failed ({exc}); "
            "falling back to the numpy reference implementation.",
            file=sys.stderr,
        )


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"WARNING: {exc}; compiled CTC kernels will not be built.", file=sys.stderr)
        return []
    return cythonize(
        [
            Extension(
                "sentence_g2p._ctc_speed",
                ["src/sentence_g2p/_ctc_speed.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
