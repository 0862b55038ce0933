"""Low-Mach Navier-Stokes / Oberbeck-Boussinesq simulation and Besov measurement toolkit."""

__version__ = "0.1.0"
