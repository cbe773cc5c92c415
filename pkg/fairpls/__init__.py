"""Fair Partial Least Squares: fairness-constrained supervised representations."""

from fairpls.dataset import Column, ColumnKind, Dataset, PreparedDataset, load_csv, split_folds, train_test_split
from fairpls.encoding import (
    CenteredMatrix, CenteringStats, ColumnRule, EncodingSpec, Normalization, apply_centering, center, encode_center)
from fairpls.pls import PlsModel, nipals_fit, power_iteration, reconstruct, top_features, transform
from fairpls.optimize import GdParams
from fairpls.fair_pls import (
    FairnessMode, FairPlsModel, VanillaSelection, eigen_regime_bound, eigen_regime_fit, eo_fair_pls_fit,
    fair_pls_fit, fpls_objective_grad, vanilla_fair_pls)
from fairpls.kernel import (
    KernelFairPlsModel, KernelKind, KernelSpec, center_gram, gram, hsic, kfpls_fit, kfpls_transform)
from fairpls.metrics import (
    FairnessReport, cov2, dataset_bias, disparate_impact, eopp_ratio, evaluate_representation, ks_statistic,
    reconstruction_error)
from fairpls.predictors import GlmFamily, GlmModel, glm_fit, glm_predict, load_external_predictions
from fairpls.recipe import DatasetRecipe, load_recipe, load_recipe_dataset
from fairpls.synthetic import SyntheticParams, gen_synthetic
from fairpls.serialize import read_model, write_model
from fairpls.experiment import ExperimentConfig, Method, run_experiment_a, run_experiment_b, select_k
from fairpls.utils import FairPlsError
