"""Write the bundled direction-number table in Joe-Kuo text layout.

The numbers come from the new-joe-kuo-6.21201 table that scipy ships in
``scipy/stats/_sobol_direction_numbers.npz``. Only the first rows are
exported; rerun with a larger ``--dims`` if more dimensions are needed.

    python tools/export_direction_numbers.py --dims 1111
"""
import argparse
import os

import numpy as np
import scipy.stats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dims", type=int, default=1111)
    parser.add_argument(
        "--out",
        default=os.path.join(
            os.path.dirname(__file__), "..", "src", "preintqmc", "data", "new-joe-kuo-6.txt"
        ),
    )
    args = parser.parse_args()

    path = os.path.join(os.path.dirname(scipy.stats.__file__), "_sobol_direction_numbers.npz")
    table = np.load(path)
    poly, vinit = table["poly"], table["vinit"]

    lines = ["d       s       a       m_i"]
    # row 0 of the scipy table is the van der Corput dimension; the text
    # layout starts at d = 2
    for dim in range(2, args.dims + 1):
        p = int(poly[dim - 1])
        s = p.bit_length() - 1
        a = (p >> 1) & ((1 << (s - 1)) - 1) if s > 1 else 0
        m = [int(v) for v in vinit[dim - 1, :s]]
        lines.append(" ".join(str(v) for v in [dim, s, a] + m))
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
