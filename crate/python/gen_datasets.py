"""Regenerates the committed datasets under data/.

- iris.csv: the classic sklearn iris measurements, unchanged.
- german_credit.csv: a synthetic stand-in with the same shape as the UCI
  numeric credit data (1000 rows, 24 integer attributes, ~70/30 class
  balance). Labels come from a planted decision tree plus label noise, so
  a tree trained on it has a recoverable structure of known provenance.

Run from the repository root: python python/gen_datasets.py
"""

import json
import os

import numpy as np
from sklearn.datasets import load_iris

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")


def write_iris():
    iris = load_iris()
    names = ["sepal_length", "sepal_width", "petal_length", "petal_width"]
    classes = ["setosa", "versicolor", "virginica"]
    rows = []
    for x, y in zip(iris.data, iris.target):
        rows.append([f"{v:.1f}" for v in x] + [classes[y]])
    with open(os.path.join(DATA, "iris.csv"), "w") as f:
        f.write(",".join(names + ["species"]) + "\n")
        for row in rows:
            f.write(",".join(row) + "\n")
    schema = {
        "label_column": "species",
        "classes": classes,
        "features": [
            {"name": n, "kind": "continuous", "lower": 0.0, "upper": 10.0}
            for n in names
        ],
    }
    with open(os.path.join(DATA, "iris.schema.json"), "w") as f:
        json.dump(schema, f, indent=2)
        f.write("\n")


class Node:
    def __init__(self, feature=None, threshold=None, left=None, right=None,
                 label=None):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.label = label

    def predict(self, x):
        node = self
        while node.label is None:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.label


def plant_tree(rng, domains, depth, active):
    """A random full binary tree of the given depth over integer features.

    Splits only touch the `active` feature subset so that most columns are
    pure distractors. Leaf labels are biased toward class 0 to get a
    roughly 70/30 split.
    """
    def grow(d):
        if d == 0:
            return Node(label=0 if rng.random() < 0.70 else 1)
        f = int(rng.choice(active))
        t = int(rng.integers(0, domains[f]))
        return Node(feature=f, threshold=t, left=grow(d - 1),
                    right=grow(d - 1))

    return grow(depth)


def write_german(rows=1000, n_features=24, depth=5, noise=0.05, seed=20260823):
    rng = np.random.default_rng(seed)
    # Mostly small ordinal domains (upper bound 2..4), a few wider ones,
    # mirroring the mix of ordinal codes and bucketed amounts in credit data.
    domains = rng.integers(2, 5, size=n_features)
    for i in rng.choice(n_features, size=4, replace=False):
        domains[i] = int(rng.integers(6, 10))
    active = rng.choice(n_features, size=4, replace=False)
    tree = plant_tree(rng, domains, depth, active)

    names = [f"a{i + 1}" for i in range(n_features)]
    classes = ["good", "bad"]
    with open(os.path.join(DATA, "german_credit.csv"), "w") as f:
        f.write(",".join(names + ["risk"]) + "\n")
        for _ in range(rows):
            x = [int(rng.integers(0, d + 1)) for d in domains]
            y = tree.predict(x)
            if rng.random() < noise:
                y = 1 - y
            f.write(",".join(str(v) for v in x) + "," + classes[y] + "\n")
    schema = {
        "label_column": "risk",
        "classes": classes,
        "features": [
            {"name": n, "kind": "integer", "lower": 0, "upper": int(d)}
            for n, d in zip(names, domains)
        ],
    }
    with open(os.path.join(DATA, "german_credit.schema.json"), "w") as f:
        json.dump(schema, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    os.makedirs(DATA, exist_ok=True)
    write_iris()
    write_german()
    print("wrote iris and german_credit under", DATA)
