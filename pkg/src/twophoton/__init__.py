"""Energy-entangled two-photon interferometry: fringe models, Fisher metrology,
instrument simulation, displacement estimation and thin-film scan analysis."""
from .errors import (ConfigError, DomainError, FitError, ModelError, TwoPhotonError)
from .fringes import BeamsplitterSpec, PbsSpec, PhotonPairSpec
from .instrument import DriftModel, InstrumentConfig, SimulatedInstrument
from .references import ReferenceFringeSet, SinusoidFit

__version__ = "0.1.0"

__all__ = [
    "BeamsplitterSpec", "ConfigError", "DomainError", "DriftModel", "FitError",
    "InstrumentConfig", "ModelError", "PbsSpec", "PhotonPairSpec", "ReferenceFringeSet",
    "SimulatedInstrument", "SinusoidFit", "TwoPhotonError",
]
