"""Finite-size moire patterns: spectra, rigidity, wavepacket and phase-space tools.

Units: um, rad/um, us.
"""

from ._moire import *  # noqa: F401,F403
from ._moire import ConfigError, NumericalError, ModelParams, __version__  # noqa: F401
