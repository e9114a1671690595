from setuptools import setup
from Cython.Build import cythonize

setup(
    ext_modules=cythonize(
        ["src/chunkstream/_kernels/_core.pyx"],
        compiler_directives={"language_level": "3"},
    ),
)
