"""Harmonic structures on finitely ramified fractals: SG_k and friends."""

from __future__ import annotations

__version__ = "0.1.0"

from .connectivity import augment, prop21_check, vertex_connectivity
from .embedding import certify_embedding, certify_nondegeneracy, export_svg, tutte_embed
from .fractal import FractalSpec, GraphApprox, SpecError, fixture, gasket_spec, load_spec, refine, save_spec
from .harmonic import (
    ExtensionSet,
    dirichlet_solve,
    extension_matrices,
    harmonic_basis,
    nondegeneracy_check,
    renorm_factor,
    word_matrix,
)
from .linalg import RatMatrix, bareiss_det, schur_complement, solve_exact
from .measures import (
    energy_inner,
    energy_measure_cell,
    kusuoka_cell,
    kusuoka_embedding_identity,
    orthonormal_pair,
    p_bound,
    ratio_table,
    s_sum,
    sg2_closed_forms,
)

__all__ = [
    "__version__",
    "augment",
    "prop21_check",
    "vertex_connectivity",
    "certify_embedding",
    "certify_nondegeneracy",
    "export_svg",
    "tutte_embed",
    "FractalSpec",
    "GraphApprox",
    "SpecError",
    "fixture",
    "gasket_spec",
    "load_spec",
    "refine",
    "save_spec",
    "ExtensionSet",
    "dirichlet_solve",
    "extension_matrices",
    "harmonic_basis",
    "nondegeneracy_check",
    "renorm_factor",
    "word_matrix",
    "RatMatrix",
    "bareiss_det",
    "schur_complement",
    "solve_exact",
    "energy_inner",
    "energy_measure_cell",
    "kusuoka_cell",
    "kusuoka_embedding_identity",
    "orthonormal_pair",
    "p_bound",
    "ratio_table",
    "s_sum",
    "sg2_closed_forms",
]
