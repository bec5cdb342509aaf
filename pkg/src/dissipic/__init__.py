"""dissipic: synthesis and certification of dissipative RINN controllers
for uncertain LTI plants."""

__version__ = "0.1.0"

from .iqc import CombinedMultiplier, FilterRealization, IqcSpec
from .systems import (
    FixedPointCfg,
    RinnController,
    StorageCertificate,
    SupplyRate,
    Theta,
    UncertainLtiPlant,
    UncertainLtiSystem,
)

__all__ = [
    "__version__",
    "CombinedMultiplier",
    "FilterRealization",
    "IqcSpec",
    "FixedPointCfg",
    "RinnController",
    "StorageCertificate",
    "SupplyRate",
    "Theta",
    "UncertainLtiPlant",
    "UncertainLtiSystem",
]
