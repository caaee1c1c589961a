"""Build script for the optional compiled coverage kernel.

The package works without the extension: conftuner.kernels falls back to a
NumPy implementation when the compiled module is absent or when
CONFTUNER_PURE_PYTHON is set.
"""

from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "conftuner._coverage",
        ["src/conftuner/_coverage.pyx"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
