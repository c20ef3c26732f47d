"""crekit: multi-parametric LP/QP with degeneracy-aware critical region
enumeration, and distributed QP solving by critical region exploration."""

__version__ = "0.1.0"
