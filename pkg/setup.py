from setuptools import Extension, setup

# The forward-backward kernel compiles to a C extension when Cython is
# available; the package falls back to the pure-Python kernel otherwise.
ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "seizchmm._fb_cy",
                ["src/seizchmm/_fb_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
