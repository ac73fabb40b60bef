"""Spatial weights, dependence diagnostics, spatial regression and spillover
effect decomposition backed by a C++ core."""

try:
    from ._core import *  # noqa: F401,F403  (installed package layout)
    from ._core import __version__  # noqa: F401
except ImportError:  # development layout: _core built by CMake on sys.path
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
