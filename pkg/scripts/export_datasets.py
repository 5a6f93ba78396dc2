"""Write the real-world benchmark datasets as label-last CSV files.

Breast (WDBC) and Wine ship with scikit-learn. Pima is the 532 complete-case
records distributed as ``Pima.tr`` + ``Pima.te`` in the ``pydataset`` bundle
(rows with missing measurements removed); its label is 1 for a positive
diabetes test.

    python3 scripts/export_datasets.py data/
"""

import argparse
from pathlib import Path

import numpy as np


def _write(path: Path, X, y):
    np.savetxt(path, np.column_stack([X, y]), delimiter=",", fmt="%.10g")
    print(f"{path}: {len(y)} rows, {X.shape[1]} features, {len(np.unique(y))} classes")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", nargs="?", default="data")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    from sklearn.datasets import load_breast_cancer, load_wine
    for name, loader in (("breast", load_breast_cancer), ("wine", load_wine)):
        X, y = loader(return_X_y=True)
        _write(out / f"{name}.csv", X, y)

    try:
        from pydataset import data
    except ImportError:
        print("pydataset not installed; skipping pima")
        return
    import pandas as pd
    pima = pd.concat([data("Pima.tr"), data("Pima.te")], ignore_index=True)
    y = (pima.pop("type") == "Yes").astype(int).to_numpy()
    _write(out / "pima.csv", pima.to_numpy(dtype=float), y)


if __name__ == "__main__":
    main()
