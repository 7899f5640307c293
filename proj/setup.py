import os
from glob import glob

from pybind11.setup_helpers import ParallelCompile, Pybind11Extension, build_ext
from setuptools import setup

here = os.path.abspath(os.path.dirname(__file__))


def eigen_include():
    override = os.environ.get("EIGEN3_INCLUDE_DIR")
    if override:
        return override
    for candidate in ("/usr/include/eigen3", "/usr/local/include/eigen3"):
        if os.path.isdir(candidate):
            return candidate
    raise RuntimeError("Eigen headers not found; set EIGEN3_INCLUDE_DIR")


ParallelCompile("NPY_NUM_BUILD_JOBS").install()

sources = sorted(glob(os.path.join(here, "src", "*.cpp")))
sources.append(os.path.join(here, "python", "switsyn", "_core.cpp"))

ext = Pybind11Extension(
    "switsyn._core",
    sources=[os.path.relpath(s, here).replace(os.sep, "/") for s in sources],
    include_dirs=[
        os.path.join(here, "include"),
        os.path.join(here, "vendor"),
        eigen_include(),
    ],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
