"""Toda and Ablowitz-Ladik lattices: Green's functions, conserved densities and flows."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
