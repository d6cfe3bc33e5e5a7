"""kanolab: an operator-learning laboratory built around quantized
spatial/spectral symbol networks, with an FNO baseline, synthetic operator and
quantum propagation benchmarks, and numerical probes of the spectral
truncation bottleneck.
"""

from .spectral import Field, ModeSet, PeriodicGrid, SpectralField  # noqa: F401

__version__ = "0.1.0"
