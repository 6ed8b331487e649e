"""Regenerate the bundled binary-classification dataset.

Development-time tool: writes src/multiverse/data/breast_cancer.csv from
scikit-learn's copy of the Wisconsin diagnostic dataset (569 rows, 30
numeric features).  Labels are remapped to {-1, +1} (malignant = -1).
Runtime code only ever reads the CSV; scikit-learn is not a dependency
of the package itself.
"""

from pathlib import Path

import numpy as np
from sklearn.datasets import load_breast_cancer

OUT = Path(__file__).resolve().parent.parent / "src" / "multiverse" / "data" / "breast_cancer.csv"


def main():
    data = load_breast_cancer()
    X = data["data"]
    # sklearn encodes malignant=0, benign=1; use -1/+1
    y = np.where(data["target"] == 0, -1, 1)
    names = [n.replace(" ", "_") for n in data["feature_names"]]
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w") as fh:
        fh.write(",".join(names + ["label"]) + "\n")
        for row, label in zip(X, y):
            cells = [repr(float(v)) for v in row] + [str(int(label))]
            fh.write(",".join(cells) + "\n")
    print(f"wrote {OUT} ({X.shape[0]} rows, {X.shape[1]} features)")


if __name__ == "__main__":
    main()
