"""Reference spin measures."""

from __future__ import annotations

from ..core import LatticeDomain
from .base import SpinModel, merge_powers
from .exact import ExactEnumModel
from .gaussian import GaussianFieldModel
from .renewal import RenewalPinningModel, renewal_mass

__all__ = ["SpinModel", "ExactEnumModel", "GaussianFieldModel", "RenewalPinningModel",
           "make_model", "merge_powers", "renewal_mass"]


def make_model(model_cfg, domain: LatticeDomain, gamma: float) -> SpinModel:
    """Instantiate the model described by a config section on ``domain``."""
    kind = model_cfg.kind
    if kind == "gaussian-field":
        return GaussianFieldModel(domain, gamma, repair_eps=model_cfg.repair_eps,
                                  k_sigmas=model_cfg.k_sigmas)
    if kind == "exact-enum":
        return ExactEnumModel(domain, model_cfg.values, model_cfg.weights, model_cfg.coupling,
                              gamma=gamma, max_sites=model_cfg.max_sites)
    if kind == "renewal":
        alpha = model_cfg.alpha if model_cfg.alpha is not None else 1.0 - gamma
        if abs((1.0 - alpha) - gamma) > 1e-12:
            raise ValueError(f"renewal needs gamma = 1 - alpha (alpha={alpha}, gamma={gamma})")
        return RenewalPinningModel(domain, alpha, model_cfg.c_alpha)
    raise ValueError(f"unknown model kind {kind!r}")
