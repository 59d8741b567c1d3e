"""Road-heating cable, PV and battery distribution simulator."""

__version__ = "0.3.0"
