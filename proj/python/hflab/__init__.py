"""Low-rank Hartree and Hartree-Fock dynamics on a periodic box."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
