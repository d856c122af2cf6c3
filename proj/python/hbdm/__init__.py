"""Python bindings for the hbdm multi-time guidance library."""

from ._hbdm import *  # noqa: F401,F403
from ._hbdm import __version__  # noqa: F401
