"""Almost-periodic ground states of non-self-adjoint Jacobi operators."""

__version__ = "0.1.0"
