"""wavehdr: HDR video reconstruction with wavelet-masked pretraining.

The package is a self-contained numerical library: a numpy reverse-mode
autodiff engine (:mod:`wavehdr.tensor`), orthonormal wavelet transforms and
dual-domain masking (:mod:`wavehdr.wavelet`), the reconstruction model with
temporal mixture-of-experts fusion and a scene-keyed memory
(:mod:`wavehdr.model`), training loops (:mod:`wavehdr.training`), HDR
quality metrics (:mod:`wavehdr.metrics`), and file I/O + CLI.
"""

__version__ = "0.1.0"

from wavehdr.errors import (ConfigError, DimensionError, GraphError,
                            NumericalError, ParseError, WaveHdrError)

__all__ = [
    "__version__",
    "WaveHdrError",
    "DimensionError",
    "GraphError",
    "ConfigError",
    "ParseError",
    "NumericalError",
]
