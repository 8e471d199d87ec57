"""
Factorized neighbourhood model
==============================

The asymmetric factor model builds each user's vector from the items they
rated, so a user is described entirely by their ratings.
"""

import numpy as np

from cfensemble.dataset import random_split
from cfensemble.evaluation import rmse
from cfensemble.fnm import FnmHyperParams, fit_fnm, fnm_epoch, fnm_objective

from _data import movielens_100k

split = random_split(movielens_100k(), ratio=0.8, seed=1)

for factors in (3, 5, 10, 20, 30):
    model = fit_fnm(split.train, None, FnmHyperParams(factors=factors))
    print(f"F={factors:2d}  RMSE {rmse(model.predict, split.test):.4f}")

# With zero epochs the model is just the baseline estimates.
baseline = fit_fnm(split.train, None, FnmHyperParams(epochs=0))
print(f"baselines only  RMSE {rmse(baseline.predict, split.test):.4f}")

# Watch the objective while training by hand.
model = fit_fnm(split.train, None, FnmHyperParams(factors=10, epochs=0))
for seed in range(5):
    fnm_epoch(model, seed)
    print(f"epoch {seed + 1}  objective {fnm_objective(model, split.train):,.0f}")

# The user vector of user 0, assembled from the items they rated.
model.refresh_user_factors()
print("user 0 vector:", np.round(model.user_component(0), 4))
