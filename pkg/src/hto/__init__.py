"""Hardware-Trojan obfuscation toolkit: detector, adversarial power patches,
circuit emulation and countermeasures on power traces."""

__version__ = "0.1.0"

from .errors import CapacityError, ConfigError, HTOError, ParseError, ShapeError
from .traces import LabeledTrace, PowerTrace, SynthConfig, TraceDataset

__all__ = [
    "CapacityError",
    "ConfigError",
    "HTOError",
    "LabeledTrace",
    "ParseError",
    "PowerTrace",
    "ShapeError",
    "SynthConfig",
    "TraceDataset",
]
