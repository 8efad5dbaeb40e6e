"""Hidden physics models: PDE parameter identification from two snapshots."""

__version__ = "0.1.0"
