"""Numerical toolkit for -Δu = a(x) u^q with Neumann boundary conditions and a sign-changing weight."""

__version__ = "0.1.0"
