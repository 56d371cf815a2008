"""Random walk excursions conditioned on their area, and their continuum limits."""
__version__ = "0.1.0"
