"""Build script for the compiled sparse-Cholesky core.

The extension is optional: if it fails to build or import, surpdiag falls
back to a SuperLU-based pure-Python backend (see surpdiag.mixedlm.backend).
"""

from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "surpdiag.mixedlm._spchol",
        ["src/surpdiag/mixedlm/_spchol.pyx"],
        extra_compile_args=["-O3"],
    ),
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    ),
)
