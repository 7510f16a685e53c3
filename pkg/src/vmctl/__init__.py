"""vmctl: 2D relativistic Vlasov-Maxwell simulation and coil-current control."""

__version__ = "0.1.0"
