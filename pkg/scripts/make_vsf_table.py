"""Write configs/petzold_vsf.csv.

The table is the Fournier-Forand phase function with the parameters that
reproduce Petzold's average-particle phase function (n = 1.10,
mu = 3.5835, backscatter fraction ~0.018), scaled by a total scattering
coefficient. Run from the repository root:

    python scripts/make_vsf_table.py --b 0.05
"""

import argparse
import csv
from pathlib import Path

import numpy as np
from scipy import integrate


def fournier_forand(psi, n=1.10, mu=3.5835):
    nu = (3.0 - mu) / 2.0
    s2 = np.sin(psi / 2.0) ** 2
    delta = 4.0 / (3.0 * (n - 1.0) ** 2) * s2
    d180 = 4.0 / (3.0 * (n - 1.0) ** 2)
    dn = delta**nu
    first = (nu * (1 - delta) - (1 - dn) + (delta * (1 - dn) - nu * (1 - delta)) / s2) / (
        4 * np.pi * (1 - delta) ** 2 * dn
    )
    second = (1 - d180**nu) / (16 * np.pi * (d180 - 1) * d180**nu) * (3 * np.cos(psi) ** 2 - 1)
    return first + second


def angle_grid():
    fine = np.geomspace(0.1, 10.0, 41)
    coarse = np.arange(12.0, 180.0 + 1e-9, 2.0)
    return np.concatenate([[0.0], fine, coarse])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--b", type=float, default=0.05, help="total scattering coefficient, 1/m")
    ap.add_argument("--out", default="configs/petzold_vsf.csv")
    args = ap.parse_args()

    deg = angle_grid()
    # the phase function diverges at 0; hold the 0.1 degree value
    p = fournier_forand(np.radians(np.maximum(deg, 0.1)))

    norm, _ = integrate.quad(lambda x: fournier_forand(x) * 2 * np.pi * np.sin(x), 1e-6, np.pi, limit=400)
    back, _ = integrate.quad(lambda x: fournier_forand(x) * 2 * np.pi * np.sin(x), np.pi / 2, np.pi, limit=200)
    print(f"normalization {norm:.4f}, backscatter fraction {back / norm:.4f}")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["angle_deg", "beta_per_sr_per_m"])
        for a, v in zip(deg, p * args.b):
            w.writerow([f"{a:.6g}", f"{v:.6e}"])
    print(f"wrote {len(deg)} rows to {out}")


if __name__ == "__main__":
    main()
