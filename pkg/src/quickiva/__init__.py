"""Newton-Raphson blind extraction (QuickIVE-1/2) and parallel separation (QuickIVA-1/2)
of independent vector components, with a seeded Monte-Carlo experiment harness."""

from .extract import (
    ExtractionState,
    StoppingRule,
    phase_rotate,
    quickive1_gradient,
    quickive1_hessian,
    quickive1_hessian_approx,
    quickive1_step,
    quickive2_gradient,
    quickive2_hessian,
    quickive2_step,
    gradient_baseline_step,
    run_extraction,
)
from .metrics import TrialOutcome, classify_outcome, isr, sir
from .model import (
    CovarianceSet,
    Dataset,
    DegenerateError,
    IveParams,
    assemble_demixing,
    assemble_mixing,
    blocking_matrix,
    orthogonal_coupling,
)
from .score import SCORES, ScoreFunction, get_score, phi_norm, phi_rational
from .separate import SeparationState, quickiva_iteration, run_separation, symmetric_orthogonalize

__version__ = "0.1.0"

__all__ = [
    "CovarianceSet",
    "Dataset",
    "DegenerateError",
    "ExtractionState",
    "IveParams",
    "SCORES",
    "ScoreFunction",
    "SeparationState",
    "StoppingRule",
    "TrialOutcome",
    "assemble_demixing",
    "assemble_mixing",
    "blocking_matrix",
    "classify_outcome",
    "get_score",
    "gradient_baseline_step",
    "isr",
    "orthogonal_coupling",
    "phase_rotate",
    "phi_norm",
    "phi_rational",
    "quickiva_iteration",
    "quickive1_gradient",
    "quickive1_hessian",
    "quickive1_hessian_approx",
    "quickive1_step",
    "quickive2_gradient",
    "quickive2_hessian",
    "quickive2_step",
    "run_extraction",
    "run_separation",
    "sir",
    "symmetric_orthogonalize",
]
