"""Build the optional compiled kernel; the package still installs without it."""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("TVSDAC_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("tvsdac._ckernel", ["src/tvsdac/_ckernel.pyx"],
                       include_dirs=[np.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        print("Cython or numpy missing; installing the pure-Python kernel only")

setup(ext_modules=ext_modules)
