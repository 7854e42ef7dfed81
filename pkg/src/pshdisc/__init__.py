"""J-holomorphic discs, disc envelopes and smooth approximation of
plurisubharmonic functions on almost complex surfaces (C^2 with a
structure J close to the standard one)."""

from .disc_calculus import DiscField, cg_transform, dbar, dz, eval_field
from .disc_solver import SolverConfig, estimate_c0, solve_disc, translate_disc
from .domain import Domain, GridSpec
from .envelope import ScalarField, SearchConfig, envelope_field, poletsky_envelope
from .psh_approx import PipelineConfig, approximation_pipeline, sub_mean_check
from .structure import QTensor, named_structure, standard_structure

__version__ = "0.1.0"
