"""Solves a CPLEX LP file (one constraint per line) with SciPy's HiGHS MILP backend.

Prints the optimal objective, or `SKIP` when SciPy is unavailable.
"""
import sys

try:
    import numpy as np
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import lil_matrix
except ImportError:
    print("SKIP")
    sys.exit(0)


def terms(tokens, index):
    coefs, sign, mag = {}, 1.0, None
    for t in tokens:
        if t in "+-":
            sign = -1.0 if t == "-" else 1.0
            continue
        try:
            mag = float(t)
            continue
        except ValueError:
            pass
        j = index.setdefault(t, len(index))
        coefs[j] = coefs.get(j, 0.0) + sign * (1.0 if mag is None else mag)
        sign, mag = 1.0, None
    return coefs


def main(path):
    index, objective, rows, bounds, binaries = {}, {}, [], {}, set()
    section = None
    for raw in open(path):
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in ("minimize", "subject to", "bounds", "binaries", "binary", "end"):
            section = key
            continue
        if section == "minimize":
            objective = terms(line.split(":", 1)[1].split(), index)
        elif section == "subject to":
            body = line.split(":", 1)[1].split()
            op, rhs = body[-2], float(body[-1])
            rows.append((terms(body[:-2], index), op, rhs))
        elif section == "bounds":
            t = line.split()
            if len(t) == 5:
                j = index.setdefault(t[2], len(index))
                bounds[j] = (float(t[0]), float(t[4]))
            else:
                j = index.setdefault(t[0], len(index))
                bounds[j] = (float(t[2]), np.inf)
        elif section in ("binaries", "binary"):
            for name in line.split():
                binaries.add(index.setdefault(name, len(index)))
    n = len(index)
    c = np.zeros(n)
    for j, a in objective.items():
        c[j] = a
    a = lil_matrix((len(rows), n))
    lo, hi = np.full(len(rows), -np.inf), np.full(len(rows), np.inf)
    for i, (coefs, op, rhs) in enumerate(rows):
        for j, v in coefs.items():
            a[i, j] = v
        if op in ("<=", "="):
            hi[i] = rhs
        if op in (">=", "="):
            lo[i] = rhs
    lb, ub = np.zeros(n), np.full(n, np.inf)
    for j, (l, u) in bounds.items():
        lb[j], ub[j] = l, u
    integrality = np.zeros(n)
    for j in binaries:
        integrality[j], lb[j], ub[j] = 1, 0, 1
    res = milp(
        c,
        constraints=LinearConstraint(a.tocsr(), lo, hi),
        integrality=integrality,
        bounds=Bounds(lb, ub),
        options={"mip_rel_gap": 0.0},
    )
    if res.status != 0:
        print(f"ERROR {res.message}")
        sys.exit(1)
    print(repr(res.fun))


if __name__ == "__main__":
    main(sys.argv[1])
