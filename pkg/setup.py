import os

from setuptools import setup

ext_modules = []
if not os.environ.get("KAMKIT_PURE"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("kamkit._kernels", ["src/kamkit/_kernels.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": 3},
        )
    except Exception as exc:  # build still succeeds with the pure fallback
        print("kamkit: compiled kernels disabled (%s)" % exc)
        ext_modules = []

setup(ext_modules=ext_modules)
