"""Build hook for the optional compiled engine.

The engine source is plain Python; when Cython and a C compiler are
available it is compiled for speed, otherwise the package installs without
the extension and runs the same code interpreted.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or failing
            self.warn(f"compiled engine not built, using pure Python ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self.warn(f"compiled engine not built, using pure Python ({exc})")


def extensions():
    if os.environ.get("HETNOC_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    return cythonize(
        ["src/hetnoc/_engine.py"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
        quiet=True,
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
