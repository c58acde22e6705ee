"""Approximate semantic join aggregates under an Oracle budget."""

import json

from . import _joinml
from ._joinml import JoinMLError, gamma_s_required, ub

__all__ = ["Dataset", "JoinMLError", "gamma_s_required", "load_dataset", "syn_dataset", "ub"]


class Dataset:
    """A dataset and its cross-product join space."""

    def __init__(self, native):
        self._native = native

    @property
    def tables(self):
        return list(self._native.tables)

    @property
    def size(self):
        return self._native.size

    def exact(self):
        return json.loads(self._native.exact())

    def estimate(self, aggregate="COUNT", budget=1000, method="bas", **spec):
        spec.update(aggregate=aggregate, budget=budget, method=method)
        return json.loads(self._native.estimate(json.dumps(spec)))

    def select(self, recall=0.9, confidence=0.95, budget=1000, seed=0):
        return json.loads(self._native.select(recall, confidence, budget, seed))

    def topk(self, k, budget=1000, group_key="grp", **spec):
        spec.update(aggregate="GROUPBY-COUNT", budget=budget, group_key=group_key)
        return json.loads(self._native.topk(k, json.dumps(spec)))


def load_dataset(path):
    return Dataset(_joinml.load_dataset(str(path)))


def syn_dataset(out_dir=None, **params):
    return Dataset(_joinml.syn_dataset(json.dumps(params), "" if out_dir is None else str(out_dir)))
