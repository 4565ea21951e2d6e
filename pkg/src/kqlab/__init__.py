"""Numerical laboratory for quantized Monge-Ampere energy on the radial model of P^1."""

__version__ = "0.1.0"
