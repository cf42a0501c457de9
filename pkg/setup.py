import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled rollout kernel is optional: if the build fails (no compiler),
# the package falls back to the pure-numpy implementation at import time.
extensions = [
    Extension(
        "pmuplace._rollout",
        ["src/pmuplace/_rollout.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
