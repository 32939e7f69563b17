"""Momentum-space band structures and DOS of twisted incommensurate bilayers.

Thin re-export of the compiled core. When the package is run from the source
tree (tests against a plain CMake build), the extension module is picked up
from PYTHONPATH instead of the package directory.
"""

try:
    from ._core import *  # noqa: F401,F403
    from ._core import __doc__  # noqa: F401
except ImportError:  # source-tree layout: _core on PYTHONPATH
    from _core import *  # noqa: F401,F403
    from _core import __doc__  # noqa: F401

__version__ = "0.1.0"
