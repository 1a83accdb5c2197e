"""Protocol library and simulator for lawful digital assemblies."""

__version__ = "0.1.0"
