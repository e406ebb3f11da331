"""Builds the autolycus-py extension and runs a small end-to-end pipeline.

Run from the repository root: python3 python/smoke_test.py
"""

import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def build_extension(workdir):
    subprocess.run(
        ["cargo", "build", "--release", "-p", "autolycus-py"],
        cwd=ROOT, check=True,
    )
    built = os.path.join(ROOT, "target", "release", "libautolycus_py.so")
    if not os.path.exists(built):  # macOS
        built = os.path.join(ROOT, "target", "release", "libautolycus_py.dylib")
    dest = os.path.join(workdir, "autolycus_py.so")
    shutil.copy(built, dest)
    return dest


def main():
    workdir = tempfile.mkdtemp(prefix="autolycus_py_")
    build_extension(workdir)
    sys.path.insert(0, workdir)
    import autolycus_py as ap

    dataset = ap.Dataset.load(
        os.path.join(ROOT, "data", "iris.csv"),
        os.path.join(ROOT, "data", "iris.schema.json"),
    )
    assert len(dataset) == 150
    assert dataset.class_names == ["setosa", "versicolor", "virginica"]

    train, test = dataset.split(0.6, seed=11)
    target = ap.Tree.fit(train, max_depth=2, seed=11)
    assert target.depth() <= 2
    acc = target.accuracy(test)
    print(f"target accuracy: {acc:.3f}")
    assert acc > 0.8

    result = ap.run_attack(
        target, train,
        seeds=[[5.1, 3.5, 1.4, 0.2], [6.1, 2.9, 4.7, 1.4], [6.5, 3.0, 5.8, 2.2]],
        max_queries=300,
        lower_bound=300, upper_bound=300,
        surrogate_max_depth=2, seed=4,
    )
    surrogate = result.surrogate()
    agreement = target.agreement(surrogate, test)
    print(f"queries: {result.queries}, visited: {result.visited}, "
          f"stop: {result.stop_reason}, agreement: {agreement:.3f}")
    assert result.queries <= 300
    assert agreement >= 0.85

    path = os.path.join(workdir, "surrogate.json")
    surrogate.save(path)
    reloaded = ap.Tree.load(path, dataset)
    assert reloaded.predict([5.1, 3.5, 1.4, 0.2]) == surrogate.predict(
        [5.1, 3.5, 1.4, 0.2])

    print("smoke test passed")


if __name__ == "__main__":
    main()
