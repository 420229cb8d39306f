"""Non-iterative envelope component estimation (NIECE) and its sparse variant."""
from ._backend import BACKEND
from .core import (EnvelopeScoreTable, NieceError, NieceResult, envelope_scores, niece_fit,
                   pcr_select, sniece_fit, sparse_candidates)
from .glm import (GlmError, GlmFit, cox_neg_partial_loglik, lasso_cox, lasso_logistic,
                  logistic_nll, refit_unpenalized)
from .linalg import (EigenSystem, LinalgError, orthonormalize, principal_sines,
                     projection_distance, sample_covariance, sym_eigen)
from .models import (Dataset, EnvelopeFit, ModelError, cox_envelope, fit_envelope,
                     logistic_envelope, predict, predictor_envelope, response_envelope,
                     simultaneous_envelope)
from .pmd import PmdConfig, PmdError, PmdFactor, deflate, pmd_decompose, pmd_rank_one
from .simgen import delta_beta, delta_gamma, gen_model, gen_sigma, wishart_pair
from .tuning import TuningError, kfold_split, select_c, select_lambda, select_u

__version__ = "0.1.0"
