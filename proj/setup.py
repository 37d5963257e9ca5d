"""Builds the _remeanflow extension by delegating to the CMake project."""

import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp).resolve() / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)
        out_path = Path(self.get_ext_fullpath(ext.name)).resolve()
        out_path.parent.mkdir(parents=True, exist_ok=True)
        subprocess.run(
            [
                "cmake",
                "-S", str(source_dir),
                "-B", str(build_dir),
                "-DCMAKE_BUILD_TYPE=Release",
                "-DRMF_BUILD_PYTHON=ON",
                f"-DPython3_EXECUTABLE={sys.executable}",
            ],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "_remeanflow",
             "-j2"],
            check=True,
        )
        built = sorted(build_dir.glob("_remeanflow*.so")) + sorted(
            build_dir.glob("**/_remeanflow*.so")
        )
        if not built:
            raise RuntimeError(f"no _remeanflow extension under {build_dir}")
        self.copy_file(str(built[0]), str(out_path))


setup(
    ext_modules=[CMakeExtension("remeanflow._remeanflow")],
    cmdclass={"build_ext": CMakeBuild},
)
