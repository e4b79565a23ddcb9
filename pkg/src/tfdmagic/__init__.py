"""Stabilizer Renyi entropy of SYK thermofield-double states.

Exact diagonalization at small N (:mod:`tfdmagic.ed`), the large-N
replica-contour saddle (:mod:`tfdmagic.saddle`) and the complex-temperature
thermal solver (:mod:`tfdmagic.thermal`), with curve drivers, fits and a
command-line runner on top.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
