"""Joint copula discrete-outcome models and debiased policy-effect estimation."""

from . import choice, copulas, dataset, dml, errors, forest, joint, synth
from .choice import (
    BinaryLogitParams,
    OrderedLogitParams,
    binary_logit_prob,
    logistic_cdf,
    marginal_loglik,
    ordered_logit_prob,
)
from .copulas import CopulaFamily, bivariate_normal_cdf, copula_cdf, norm_ppf
from .dataset import (
    Column,
    Dataset,
    FoldAssignment,
    VariableSchema,
    discretize_wait,
    jenks_breaks,
    kfold_split,
    load_csv,
    min_max_normalize,
)
from .dml import (
    DmlConfig,
    DmlEstimate,
    Residuals,
    alpha_inference,
    cross_fit_nuisances,
    estimate_alpha,
    moment_cost,
    naive_alpha,
    run_dml,
)
from .forest import (
    ForestConfig,
    ForestModel,
    default_outcome_config,
    default_policy_config,
    fit_forest,
    predict,
    tune_by_cv,
)
from .joint import (
    JointFit,
    JointParams,
    JointSpec,
    bic,
    compare_families,
    fit_joint_mle,
    joint_cell_prob,
    joint_loglik,
)
from .synth import (
    CopulaDgpSpec,
    DmlDgpSpec,
    DmlTruth,
    generate_copula_data,
    generate_dml_data,
    infeasible_alpha,
    make_preset,
)

__version__ = "0.1.0"
