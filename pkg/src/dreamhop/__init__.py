"""Dreaming Hopfield couplings: spectral laws, one-step retrieval theory and simulations."""

__version__ = "0.1.0"

from .coupling import (CouplingMatrix, DreamingKernel, ModelSetting, Setting, build_coupling,
                       build_information_matrix, dreaming_kernel, eigen_map, eigen_map_inverse,
                       integrate_dreaming_ode, spectrum)
from .data_gen import (LoadDomainError, ParameterDomainError, RngSpec, make_examples, make_ground_truths,
                       perturb_on_ball, sample_rademacher)
from .retrieval_theory import RetrievalScenario, Scenario, ga_validity_bound, m1_theory, moments, predict_curve
from .spectral_theory import SpectralLaw, bulk_density, integrate_bulk, integrate_full, law_for, se_theory

__all__ = [
    "CouplingMatrix", "DreamingKernel", "ModelSetting", "Setting", "build_coupling", "build_information_matrix",
    "dreaming_kernel", "eigen_map", "eigen_map_inverse", "integrate_dreaming_ode", "spectrum",
    "LoadDomainError", "ParameterDomainError", "RngSpec", "make_examples", "make_ground_truths",
    "perturb_on_ball", "sample_rademacher", "RetrievalScenario", "Scenario", "ga_validity_bound", "m1_theory",
    "moments", "predict_curve", "SpectralLaw", "bulk_density", "integrate_bulk", "integrate_full", "law_for",
    "se_theory",
]
