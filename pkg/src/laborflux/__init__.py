"""laborflux: occupation unemployment risk and technology-exposure model evaluation."""

__version__ = "0.1.0"
