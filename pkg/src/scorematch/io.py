"""JSON and CSV serialisation of estimates, paths, losses and reports."""
import csv
import json
from pathlib import Path

import numpy as np

from .cd import Estimate
from .losses import PAIR
from .path import SolutionPath


class _Encoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, (np.bool_,)):
            return bool(o)
        return super().default(o)


def dumps(obj, **kw) -> str:
    return json.dumps(obj, cls=_Encoder, **kw)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _coord_labels(layout):
    rc = layout.reduced
    labels = []
    for kind, s, j, k in zip(rc.kind, rc.set_index, rc.row, rc.col):
        if kind == PAIR:
            labels.append(f"{layout.pair_sets[s]}[{j},{k}]")
        elif kind == 0:
            labels.append(f"{layout.pair_sets[s]}[{j},{j}]")
        else:
            labels.append(f"{layout.singles[s]}[{j}]")
    return labels


def estimate_to_dict(est: Estimate, group_norms: bool = False) -> dict:
    layout = est.layout
    mats = est.matrices()
    out = {
        "lambda": est.lam,
        "kkt_residual": est.kkt_residual,
        "iterations": est.iterations,
        "converged": est.converged,
        "m": layout.m,
        "edges": [list(e) for e in est.edges()],
        "matrices": {k: v for k, v in mats.items()},
    }
    if group_norms and layout.n_pair_sets > 1:
        norm = np.sqrt(sum(mats[name] ** 2 for name in layout.pair_sets))
        np.fill_diagonal(norm, 0.0)
        out["group_norms"] = [{"pair": [int(j), int(k)], "norm": float(norm[j, k])}
                              for j, k in est.edges()]
    out.update({k: v for k, v in est.meta.items() if isinstance(v, (int, float, str, bool))})
    return out


def path_to_dict(path: SolutionPath, kkt=None) -> dict:
    rc = path.layout.reduced
    segs = []
    for r, act in enumerate(path.active_sets):
        pairs = sorted({(int(rc.row[c]), int(rc.col[c])) for c in act if rc.kind[c] == PAIR})
        segs.append({"lambda_low": float(path.knots[r]),
                     "lambda_high": float(path.knots[r + 1]) if r + 1 < len(path.knots) else None,
                     "active_pairs": [list(p) for p in pairs]})
    out = {
        "knots": path.knots,
        "coefficients": path.coefs,
        "slopes": path.slopes,
        "segments": segs,
        "termination": path.termination,
        "m": path.layout.m,
        "coordinates": _coord_labels(path.layout),
    }
    if kkt is not None:
        out["kkt_residual_at_knots"] = kkt
    return out


def write_path_csv(path_obj: SolutionPath, dest) -> None:
    """Long-format coefficients at every knot: ``lambda, coordinate, value, t``.

    ``t`` is the summed absolute off-diagonal magnitude at that knot.
    """
    labels = _coord_labels(path_obj.layout)
    t = path_obj.total_abs_offdiag()
    with open(dest, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["lambda", "coordinate", "value", "t"])
        for r, lam in enumerate(path_obj.knots):
            for c, label in enumerate(labels):
                wr.writerow([repr(float(lam)), label, repr(float(path_obj.coefs[r, c])), repr(float(t[r]))])


def write_rows_csv(dest, rows, columns) -> None:
    with open(dest, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(columns)
        for row in rows:
            wr.writerow([row[c] for c in columns])
