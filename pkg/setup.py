from setuptools import Extension, setup

from Cython.Build import cythonize

ext_modules = [
    Extension(
        "nanocnn.kernels._ckernels",
        sources=["src/nanocnn/kernels/_ckernels.pyx"],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        ext_modules,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    ),
)
