# Copyright 2026 the floss authors
# SPDX-License-Identifier: Apache-2.0
import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ext = Pybind11Extension(
    "floss._floss",
    sources=sorted(glob.glob("src/*.cpp")) + ["bindings/pymodule.cpp"],
    include_dirs=["include", "vendor"],
    libraries=["openblas"],
    cxx_std=20,
    extra_compile_args=["-O2"],
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
