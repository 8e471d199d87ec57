"""
ISMF, RISMF and BRISMF
======================

Three SGD matrix factorizations over a range of latent sizes, plus the
training loss of one BRISMF run.
"""

from cfensemble.dataset import random_split
from cfensemble.evaluation import rmse
from cfensemble.factorization import MfHyperParams, fit_mf

from _data import movielens_100k

split = random_split(movielens_100k(), ratio=0.8, seed=1)

# ISMF has no regularization, RISMF adds it, BRISMF also pins one user and
# one item feature to 1 so the model learns item and user biases.
for variant in ("ismf", "rismf", "brismf"):
    row = []
    for factors in (3, 5, 10, 20, 50):
        model = fit_mf(split.train, None, MfHyperParams(variant, factors=factors))
        row.append(f"F={factors}: {rmse(model.predict, split.test):.4f}")
    print(f"{variant:7s}", "  ".join(row))

# The weighted objective should fall every epoch.
model = fit_mf(split.train, None, MfHyperParams("brismf", factors=10, epochs=10), record_loss=True)
for epoch, loss in enumerate(model.train_log, start=1):
    print(f"epoch {epoch:2d}  objective {loss:,.0f}")
print("pinned columns stay at 1:", bool((model.P[:, 0] == 1).all() and (model.Q[1] == 1).all()))
