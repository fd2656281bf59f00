"""Tape-based reverse-mode differentiation and finite-difference checks."""

from .tape import Tape, Var, backward

__all__ = ["Tape", "Var", "backward"]
