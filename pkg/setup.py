"""Build the optional compiled waveguide kernel.

If Cython or a C compiler is unavailable the package still installs and
falls back to the numpy stepper at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize
except ImportError:
    pass
else:
    ext_modules = cythonize(
        [Extension("nsgate._bathkernel", ["src/nsgate/_bathkernel.pyx"],
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
