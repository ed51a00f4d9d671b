"""Global-local shrinkage priors for the sparse normal means model.

Fixed-scale posterior quantities live in :mod:`glshrink.kernel`, the
plug-in and hierarchical treatments of the global scale in
:mod:`glshrink.empirical` and :mod:`glshrink.fullbayes`, and two-groups
testing in :mod:`glshrink.multitest`.
"""

__version__ = "0.1.0"

from .priors import (AssumptionViolation, PriorSpec, make_generalized_double_pareto, make_horseshoe,
                     make_prior, make_three_parameter_beta, prior_from_name, validate_spec)
from .kernel import (QuadratureConfig, QuadratureError, kappa_moments, posterior_mean_theta,
                     posterior_var_theta, sample_theta, shrinkage_weight)
from .empirical import EBConfig, eb_estimate, eb_total_posterior_variance, estimate_tau
from .fullbayes import (TauPrior, fb_posterior_mean, fb_posterior_variance, fb_sample_theta,
                        fb_shrinkage_weight, fit_full_bayes, tau_posterior, truncated_half_cauchy,
                        truncated_uniform)
from .multitest import (DecisionSet, TwoGroupsModel, bayes_oracle, mc_bayes_risk,
                        misclassification_loss, oracle_optimal_risk, rule_eb, rule_fb,
                        rule_fixed_tau)
