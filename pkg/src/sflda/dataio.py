"""CSV ingestion/emission and model persistence.

File formats (UTF-8, `.` decimal):
  curves.csv  header `curve_id,t,x`, long format, one row per observation.
  labels.csv  header `curve_id,label`, label a positive integer or empty.
  model file  versioned JSON with the basis, grids, J, coefficients and
              selection metadata; floats round-trip exactly via repr.
  pred.csv    header `curve_id,pred_class,p1..pL`.
"""

import csv
import json

import numpy as np

from .basis import CrossProductMatrix, GaussianBasis, KnotGrid
from .errors import DataFormatError, InvalidArgumentError
from .smoother import RawCurve

MODEL_FORMAT = "sflda-model"
MODEL_VERSION = 1


def write_curves_csv(path, curves):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve_id", "t", "x"])
        for c in curves:
            for t, x in zip(c.times, c.values):
                w.writerow([c.id, repr(float(t)), repr(float(x))])


def write_labels_csv(path, curve_ids, labels):
    labels = np.asarray(labels)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve_id", "label"])
        for cid, lab in zip(curve_ids, labels):
            w.writerow([cid, "" if int(lab) == 0 else int(lab)])


def _parse_float(text, line_no, what):
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(f"line {line_no}: bad {what} value {text!r}", line=line_no) from None


def read_curves_csv(path, drop_missing=False):
    """Parse a long-format curve file; returns (curves, dropped_ids).

    Curves with any missing value are dropped when drop_missing is set and
    rejected (with their ids listed) otherwise. Duplicate (curve_id, t)
    pairs are an error.
    """
    order = []
    times = {}
    values = {}
    missing = {}
    seen_pairs = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["curve_id", "t", "x"]:
            raise DataFormatError(f"{path}: expected header curve_id,t,x, got {header}", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise DataFormatError(f"line {line_no}: expected 3 fields, got {len(row)}", line=line_no)
            cid = row[0].strip()
            if not cid:
                raise DataFormatError(f"line {line_no}: empty curve_id", line=line_no)
            t = _parse_float(row[1], line_no, "t")
            if cid not in times:
                order.append(cid)
                times[cid] = []
                values[cid] = []
            key = (cid, t)
            if key in seen_pairs:
                raise DataFormatError(f"line {line_no}: duplicate observation for {key}", line=line_no)
            seen_pairs.add(key)
            xtxt = row[2].strip()
            if xtxt == "" or xtxt.lower() in ("nan", "na"):
                missing[cid] = missing.get(cid, 0) + 1
                x = float("nan")
            else:
                x = _parse_float(xtxt, line_no, "x")
                if np.isnan(x):
                    missing[cid] = missing.get(cid, 0) + 1
            times[cid].append(t)
            values[cid].append(x)

    if missing and not drop_missing:
        ids = ", ".join(sorted(missing))
        raise DataFormatError(
            f"{path}: curves with missing values: {ids} (pass drop_missing to discard them)"
        )
    dropped = sorted(missing)
    curves = [
        RawCurve(times=np.array(times[cid]), values=np.array(values[cid]), id=cid)
        for cid in order
        if cid not in missing
    ]
    return curves, dropped


def read_labels_csv(path):
    """Parse curve_id -> label (positive int); missing/empty means unlabeled."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["curve_id", "label"]:
            raise DataFormatError(f"{path}: expected header curve_id,label, got {header}", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise DataFormatError(f"line {line_no}: expected 2 fields, got {len(row)}", line=line_no)
            cid = row[0].strip()
            text = row[1].strip()
            if cid in out:
                raise DataFormatError(f"line {line_no}: duplicate label row for {cid!r}", line=line_no)
            if text == "":
                out[cid] = 0
                continue
            try:
                lab = int(text)
            except ValueError:
                raise DataFormatError(f"line {line_no}: bad label {text!r}", line=line_no) from None
            if lab <= 0:
                raise DataFormatError(f"line {line_no}: labels must be positive, got {lab}", line=line_no)
            out[cid] = lab
    return out


def ingest_csv(curves_path, labels_path=None, drop_missing=False):
    """Read curves plus optional labels; labels default to unlabeled.

    Returns (curves, labels array aligned with curves, dropped_ids).
    """
    curves, dropped = read_curves_csv(curves_path, drop_missing=drop_missing)
    label_map = read_labels_csv(labels_path) if labels_path else {}
    labels = np.array([label_map.get(c.id, 0) for c in curves], dtype=np.int64)
    return curves, labels, dropped


def write_predictions_csv(path, curve_ids, classes, posteriors):
    posteriors = np.atleast_2d(np.asarray(posteriors))
    n_classes = posteriors.shape[1] if len(curve_ids) else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve_id", "pred_class"] + [f"p{k}" for k in range(1, n_classes + 1)])
        for i, cid in enumerate(curve_ids):
            w.writerow([cid, int(classes[i])] + [repr(float(v)) for v in posteriors[i]])


def model_to_dict(model):
    b = model.basis
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "basis": {
            "m": b.m,
            "centers": [float(v) for v in b.centers],
            "width": float(b.width),
            "knots": [float(v) for v in b.grid.knots],
            "t_min": float(b.grid.t_min),
            "t_max": float(b.grid.t_max),
            "spacing": float(b.grid.spacing),
        },
        "zeta_grid": [float(v) for v in model.zeta_grid],
        "train_zetas": {cid: float(z) for cid, z in zip(model.train_ids, model.train_zetas)},
        "J": [[float(v) for v in row] for row in model.J.matrix],
        "n_classes": int(model.n_classes),
        "beta": [[float(v) for v in row] for row in model.beta],
        "lambda": float(model.lam),
        "criterion": {"kind": model.criterion_kind, "value": float(model.criterion_value)},
        "em_iterations": int(model.em_iterations),
        "method": model.method,
    }


def save_model(path, model):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    from .pipeline import FittedModel  # local import to avoid a cycle

    with open(path) as fh:
        raw = json.load(fh)
    if raw.get("format") != MODEL_FORMAT:
        raise DataFormatError(f"{path}: not a {MODEL_FORMAT} file")
    if raw.get("version") != MODEL_VERSION:
        raise DataFormatError(f"{path}: unsupported model version {raw.get('version')}")
    b = raw["basis"]
    grid = KnotGrid(
        knots=np.array(b["knots"], dtype=np.float64),
        t_min=b["t_min"], t_max=b["t_max"], spacing=b["spacing"],
    )
    basis = GaussianBasis(m=int(b["m"]), centers=np.array(b["centers"], dtype=np.float64),
                          width=float(b["width"]), grid=grid)
    if basis.m != len(b["centers"]):
        raise DataFormatError(f"{path}: basis m does not match centers")
    train_zetas = raw.get("train_zetas", {})
    return FittedModel(
        basis=basis,
        zeta_grid=np.array(raw["zeta_grid"], dtype=np.float64),
        train_ids=list(train_zetas.keys()),
        train_zetas=np.array(list(train_zetas.values()), dtype=np.float64),
        J=CrossProductMatrix(matrix=np.array(raw["J"], dtype=np.float64)),
        n_classes=int(raw["n_classes"]),
        beta=np.array(raw["beta"], dtype=np.float64),
        lam=float(raw["lambda"]),
        criterion_kind=raw["criterion"]["kind"],
        criterion_value=float(raw["criterion"]["value"]),
        em_iterations=int(raw["em_iterations"]),
        method=raw.get("method", "sflda"),
    )
