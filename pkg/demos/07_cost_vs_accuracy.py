"""
Cost against accuracy
=====================

Training time grows linearly with ensemble size, and cheap k-NN ensembles
can sit close to a single factor model.  Both tables are CSV-ready.
"""

from cfensemble.dataset import random_split
from cfensemble.ensemble import BaseLearnerSpec
from cfensemble.evaluation import (
    ExperimentConfig,
    ModelDescriptor,
    cost_accuracy_frontier,
    run_protocol,
    time_scaling_probe,
)
from cfensemble.factorization import MfHyperParams
from cfensemble.fnm import FnmHyperParams
from cfensemble.knn import KnnConfig

from _data import movielens_100k

data = movielens_100k()
split = random_split(data, ratio=0.8, seed=1)

probe = time_scaling_probe(
    ModelDescriptor("random-fnm", BaseLearnerSpec("fnm", FnmHyperParams(factors=10)), "random_injection"),
    split.train,
    range(1, 11),
)
print("K,train_s")
for K, seconds, _ in probe.points:
    print(f"{K},{seconds:.3f}")
print(f"slope {probe.slope:.3f}s per member, R^2 {probe.r_squared:.4f}")

knn = BaseLearnerSpec("knn_user", KnnConfig(k=20))
models = [
    ModelDescriptor("bagged-knn", knn, "bagging", K=5),
    ModelDescriptor("ismf", BaseLearnerSpec("ismf", MfHyperParams("ismf", factors=3))),
    ModelDescriptor("rismf", BaseLearnerSpec("rismf", MfHyperParams("rismf", factors=3))),
    ModelDescriptor("brismf", BaseLearnerSpec("brismf", MfHyperParams("brismf", factors=5))),
]
report = run_protocol(ExperimentConfig(None, models, split_seeds=(1, 2)), data)
print("model,train_seconds,rmse")
for name, seconds, score in cost_accuracy_frontier(report):
    print(f"{name},{seconds:.3f},{score:.4f}")
