"""Build script for the optional compiled rasterization kernel.

The package is pure Python except for one hot loop: anti-aliased segment
rasterization in sketchadapt._raster_fast. If Cython or a C compiler is
unavailable the build degrades to the numpy fallback kernel and everything
still works (slower). Benchmarks comparing the two live in benchmarks/.
"""

import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the accelerator if we can; fall back silently if we cannot."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any build failure is non-fatal
            print(f"warning: skipping compiled rasterizer ({exc}); "
                  "using the numpy kernel")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: could not compile {ext.name} ({exc}); "
                  "using the numpy kernel")


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "sketchadapt._raster_fast",
        sources=["src/sketchadapt/_raster_fast.pyx"],
        include_dirs=[numpy.get_include()],
        # keep FP arithmetic identical to the numpy kernel (no FMA contraction)
        extra_compile_args=["-O2", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
