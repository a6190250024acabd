"""Exact tagged-particle distributions in the asymmetric simple exclusion process."""
from .contour import ContourPlan, QuadratureResult, integrate_tensor, plan_contours
from .formulas import (
    SeriesNotConverged,
    SeriesReport,
    current_tail_prob,
    prob_alternating,
    prob_alternating_unsym,
    prob_finite,
    prob_onesided,
    prob_step,
)
from .identities import lemma31_check, lemma32_lhs, lemma32_rhs, residue_identity_check
from .model import (
    AlternatingZ,
    DistributionQuery,
    FiniteSet,
    ModelParams,
    OneSidedAlternating,
    PoleError,
    StepPositive,
)
from .oracles import EmpiricalCdf, SimConfig, master_equation, mc_simulate, skellam_single
from .taucomb import enumerate_subsets, sigma_count, tau_binomial

__version__ = "0.1.0"
