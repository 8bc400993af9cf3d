"""Produce the CSV files under data/.

wine.csv is the classic 178-row cultivar dataset extracted from
scikit-learn's bundled copy.  glass.csv, seeds.csv and banknote.csv are
synthetic stand-ins generated here with the published shapes and class
counts, with cluster geometry tuned so tree/forest accuracies and weak-vote
disagreement land in the documented regimes (banknote nearly separable,
seeds moderate, glass hard and imbalanced).  Real UCI files in the same
column layout can be dropped in as replacements.

Run from the repository root:  python scripts/generate_data.py
"""

import csv
from pathlib import Path

import numpy as np

OUT_DIR = Path(__file__).resolve().parent.parent / "data"


def write_csv(path, header, features, labels, id_column=False):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, (row, label) in enumerate(zip(features, labels)):
            out = [f"{v:.6g}" for v in row] + [int(label)]
            if id_column:
                out = [i + 1] + out
            writer.writerow(out)


def make_wine():
    from sklearn.datasets import load_wine

    data = load_wine()
    order = np.argsort(data.target, kind="stable")
    write_csv(
        OUT_DIR / "wine.csv",
        list(data.feature_names) + ["class"],
        data.data[order],
        data.target[order],
    )


def make_banknote():
    """Two elongated, nearly separable clusters; ~1-3% weak-vote disagreement."""
    rng = np.random.default_rng(20240517)
    names = ["variance", "skewness", "curtosis", "entropy", "class"]
    n0, n1 = 762, 610
    mean0 = np.array([2.8, 5.6, -1.2, -1.1])
    mean1 = np.array([-2.6, -2.2, 3.4, -1.3])
    spread = np.array([1.25, 2.9, 2.3, 1.8])

    def sample(n, mean):
        z = rng.standard_normal((n, 4))
        x = mean + z * spread
        # skewness and curtosis trade off, as in wavelet statistics
        x[:, 2] -= 0.45 * (x[:, 1] - mean[1])
        x[:, 3] -= 0.25 * np.abs(x[:, 1] - mean[1])
        return x

    X = np.vstack([sample(n0, mean0), sample(n1, mean1)])
    y = np.array([0] * n0 + [1] * n1)
    write_csv(OUT_DIR / "banknote.csv", names, X, y)


def make_seeds():
    """Three correlated geometric clusters with adjacent overlap."""
    rng = np.random.default_rng(20240518)
    names = ["area", "perimeter", "compactness", "length", "width", "asymmetry", "groove", "class"]
    rows, labels = [], []
    # variety profiles: (area mean, asymmetry mean); Rosa large, Canadian small
    profiles = [(14.9, 2.7), (18.3, 3.8), (11.9, 4.9)]
    for cls, (area_mu, asym_mu) in enumerate(profiles):
        for _ in range(70):
            area = rng.normal(area_mu, 1.45)
            compact = rng.normal(0.871, 0.022)
            perimeter = np.sqrt(4.0 * np.pi * area / compact)
            length = rng.normal(0.405 * perimeter, 0.13)
            width = 4.0 * area / (np.pi * length) + rng.normal(0.0, 0.07)
            asym = max(0.1, rng.normal(asym_mu, 1.5))
            groove = length - rng.normal(0.55, 0.16)
            rows.append([area, perimeter, compact, length, width, asym, groove])
            labels.append(cls)
    write_csv(OUT_DIR / "seeds.csv", names, np.asarray(rows), np.asarray(labels))


def make_glass():
    """Six oxide-composition clusters; window types 0-2 overlap heavily."""
    rng = np.random.default_rng(20240519)
    names = ["id", "ri", "na", "mg", "al", "si", "k", "ca", "ba", "fe", "class"]
    counts = [70, 76, 17, 13, 9, 29]
    #            na     mg     al     si     k      ca     ba     fe
    centers = [
        [13.2, 3.55, 1.15, 72.6, 0.44, 8.80, 0.02, 0.06],  # float windows
        [13.1, 2.95, 1.44, 72.6, 0.54, 9.25, 0.05, 0.08],  # non-float windows
        [13.4, 3.45, 1.24, 72.3, 0.42, 8.85, 0.03, 0.06],  # vehicle windows
        [13.0, 0.80, 2.10, 72.4, 1.50, 9.50, 0.30, 0.06],  # containers
        [14.7, 1.30, 1.45, 73.3, 0.05, 9.20, 0.05, 0.01],  # tableware
        [14.4, 0.55, 2.12, 72.9, 0.25, 8.55, 1.05, 0.02],  # headlamps
    ]
    scales = [
        [0.35, 0.32, 0.20, 0.45, 0.13, 0.42, 0.05, 0.05],
        [0.40, 0.50, 0.24, 0.50, 0.19, 0.58, 0.10, 0.07],
        [0.32, 0.32, 0.22, 0.42, 0.12, 0.40, 0.06, 0.05],
        [0.55, 0.70, 0.42, 0.60, 0.60, 1.00, 0.35, 0.05],
        [0.40, 0.70, 0.28, 0.48, 0.05, 0.62, 0.08, 0.01],
        [0.45, 0.60, 0.32, 0.50, 0.18, 0.70, 0.42, 0.02],
    ]
    rows, labels = [], []
    for cls, n in enumerate(counts):
        mu = np.asarray(centers[cls])
        sd = np.asarray(scales[cls])
        for _ in range(n):
            oxides = rng.normal(mu, sd)
            oxides[1] = max(0.0, oxides[1])  # mg
            oxides[5] = max(0.0, oxides[5])  # k
            oxides[6] = max(0.0, oxides[6])  # ba
            oxides[7] = max(0.0, oxides[7])  # fe
            # refractive index tracks calcium and silicon content
            ri = 1.5180 + 0.0022 * (oxides[5 + 1] - 8.9) - 0.0011 * (oxides[3] - 72.6) + rng.normal(0, 0.0011)
            rows.append([ri] + list(oxides))
            labels.append(cls)
    write_csv(OUT_DIR / "glass.csv", names, np.asarray(rows), np.asarray(labels), id_column=True)


def main():
    OUT_DIR.mkdir(exist_ok=True)
    make_wine()
    make_banknote()
    make_seeds()
    make_glass()
    for name in ("wine", "banknote", "seeds", "glass"):
        path = OUT_DIR / f"{name}.csv"
        print(f"wrote {path} ({sum(1 for _ in open(path)) - 1} rows)")


if __name__ == "__main__":
    main()
