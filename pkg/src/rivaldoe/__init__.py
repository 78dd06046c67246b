"""Design of experiments for discriminating rival parametric models."""

from .campaign import CampaignConfig, CampaignRecord, CampaignStats, aggregate, run_campaign, run_replication
from .case_studies import CaseStudy, get_case_study, simulate_observation
from .criteria import PredictiveSet, d_aw, d_bf, d_bh, d_hr, d_jr
from .discrimination import DiscriminationState, check_termination, initial_state, update_posteriors
from .exceptions import (
    CapabilityError,
    ContractError,
    DataGenerationError,
    ModelEvaluationError,
    NumericalError,
    RenormalisationError,
    SingularInformationError,
    SingularKernelError,
)
from .gp import GaussianProcess, KernelParams, PosteriorGP, gp_fit, sparse_fit
from .models import RivalModel
from .param_estim import ExperimentalDataset, estimate_parameters, laplace_covariance
from .surrogate import (
    GaussianPrediction,
    GPSurrogate,
    build_surrogate,
    generate_training_data,
    marginal_analytic,
    marginal_taylor1,
    marginal_taylor2,
)

__version__ = "0.1.0"
