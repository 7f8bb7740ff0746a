"""Hierarchical completely random measures with Poisson likelihoods."""

from .crm_core import LevySpec, SignedLogValue, psi, psi_deriv

__all__ = ["LevySpec", "SignedLogValue", "psi", "psi_deriv"]
__version__ = "0.1.0"
