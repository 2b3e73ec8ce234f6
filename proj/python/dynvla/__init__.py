"""Dynamics chain-of-thought driving stack: torch-free core bindings.

Training and evaluation of the neural modules live in the ``dynvla`` CLI.
"""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
