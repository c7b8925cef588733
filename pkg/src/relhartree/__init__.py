"""Semi-relativistic Hartree dynamics and its Vlasov-Poisson classical limit."""

__version__ = "0.1.0"
