"""Localizing emanating devices with a switched antenna array.

Modules: ``emamodel`` (signals, multipath, noise), ``capture`` (acquisition and
IQ files), ``chanest`` (relative channels, clock and interference detection),
``aoasolve`` (sparse and subspace AoA), ``localize`` (triangulation) and
``cli``.
"""

__version__ = "0.1.0"
