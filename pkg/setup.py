import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("HAWKCAST_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "hawkcast._core._speedups",
                ["src/hawkcast/_core/_speedups.pyx"],
                optional=True,
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
