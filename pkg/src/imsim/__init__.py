"""Link-level simulation of spatial, parallel spatial and time-indexed
modulation schemes with maximum-likelihood detection."""

from imsim.config import (
    ChannelTimeModel,
    ConfigError,
    Family,
    Normalization,
    Scheme,
    SchemeConfig,
    ValidatedConfig,
    codebook_size,
    spectral_efficiency,
    validate,
)
from imsim.constellation import Constellation, build_constellation
from imsim.kernels import BACKEND

__version__ = "0.1.0"
