"""Point-source localization from partial-aperture Helmholtz data."""

__version__ = "0.1.0"
