"""
Fusion and randomness injection
===============================

Fusion averages models trained with different settings on the same data.
Randomness injection averages runs of a randomised learner: factor models
differ in their initial values, and random k-NN draws k neighbours from the
top 2k.
"""

from cfensemble.dataset import random_split
from cfensemble.ensemble import (
    BaseLearnerSpec,
    fit_base,
    fuse,
    inject_randomness,
    knn_fusion_params,
    latent_size_fusion_params,
)
from cfensemble.evaluation import ensemble_size_curve, rmse
from cfensemble.fnm import FnmHyperParams
from cfensemble.knn import KnnConfig

from _data import movielens_100k

split = random_split(movielens_100k(), ratio=0.8, seed=1)
train, test = split.train, split.test

knn = BaseLearnerSpec("knn_user", KnnConfig("user_user", "pearson", 20))
print(f"k-NN-User                 {rmse(fit_base(knn, train).predict, test):.4f}")
for scheme in ("metric", "perspective", "both"):
    ens = fuse(train, None, "knn", knn_fusion_params(scheme, k=20))
    print(f"fusion by {scheme:12s}    {rmse(ens.predict, test):.4f}  ({len(ens)} members)")
print(f"random k-NN (10)          {rmse(inject_randomness(train, None, knn, 10).predict, test):.4f}")

fnm = BaseLearnerSpec("fnm", FnmHyperParams(factors=10))
print(f"FNM F=10                  {rmse(fit_base(fnm, train).predict, test):.4f}")
fused = fuse(train, None, "fnm", latent_size_fusion_params(FnmHyperParams(), 10))
print(f"FNM fusion over 10 sizes  {rmse(fused.predict, test):.4f}")
random = inject_randomness(train, None, fnm, 10)
print("random FNM by size:", " ".join(f"{v:.4f}" for v in ensemble_size_curve(random, test)))
