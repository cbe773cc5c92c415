import numpy as np

from fairpls import SyntheticParams, center, encode_center, fair_pls_fit, gen_synthetic, cov2
from fairpls.encoding import EncodingSpec, Normalization
from fairpls.synthetic import FEATURE_NAMES, SENSITIVE_NAME, TARGET_NAME

# Draw the two-group synthetic dataset
table = gen_synthetic(SyntheticParams.default(seed=0))
features = table.select(FEATURE_NAMES)

# Standardize the inputs and target, center the sensitive attribute
X = encode_center(features, EncodingSpec.for_dataset(features, Normalization.zero_mean_unit_variance))
Y = center(table.values(TARGET_NAME).astype(float), scale=True)
S = center(table.values(SENSITIVE_NAME).astype(float))

# Fit two components at increasing fairness trade-offs
for eta in (0.0, 1.0, 10.0):
    model = fair_pls_fit(X, Y, S, k=2, eta=eta)
    print(f"eta={eta:>4}: Cov2(T, y)={cov2(model.T, Y):.4f} Cov2(T, s)={cov2(model.T, S):.4f}")

# Project new rows with the training statistics
held_out = gen_synthetic(SyntheticParams.default(seed=1, n_per_group=5, exact_moments=False)).select(FEATURE_NAMES)
scores = model.transform(X.stats.transform(held_out))
print(np.round(scores, 3))
