"""CSV/JSON writers and readers for zeros, curves, strips and reports.

Floats are written with ``repr`` so every file re-parses to the exact
in-memory value; column and key order is fixed for golden-file diffs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .conformal import VerificationReport
from .curves import CurveComponent, constraint_from_dict
from .zeros import ZeroRecord

ZERO_COLUMNS = ("re", "im", "multiplicity", "residual", "certified_radius")
CURVE_COLUMNS = ("re", "im", "f_re", "f_im")
REPORT_COLUMNS = ("identity", "r", "measured", "target", "deviation", "pass")


def plain(obj):
    """numpy scalars/arrays and complex numbers to JSON-ready builtins."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(plain(obj), indent=2) + "\n"


def write_json(path, obj):
    Path(path).write_text(dump_json(obj), encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --- zeros ----------------------------------------------------------------------

def write_zeros_csv(path, records):
    _write_rows(path, ZERO_COLUMNS,
                ([float(r.location.real), float(r.location.imag), int(r.multiplicity),
                  float(r.residual), float(r.certified_radius)] for r in records))


def read_zeros_csv(path) -> list[dict]:
    header, rows = _read_rows(path)
    out = []
    for row in rows:
        d = dict(zip(header, row))
        out.append({"location": complex(float(d["re"]), float(d["im"])),
                    "multiplicity": int(d["multiplicity"]),
                    "residual": float(d["residual"]),
                    "certified_radius": float(d["certified_radius"])})
    return out


def write_zeros_json(path, records):
    write_json(path, {"zeros": [r.to_dict() for r in records]})


def read_zeros_json(path) -> list[ZeroRecord]:
    return [ZeroRecord.from_dict(d) for d in read_json(path)["zeros"]]


# --- curves ---------------------------------------------------------------------

def write_curve_csv(path, comp: CurveComponent):
    _write_rows(path, CURVE_COLUMNS,
                ([float(p.real), float(p.imag), float(v.real), float(v.imag)]
                 for p, v in zip(comp.points, comp.values)))


def read_curve_csv(path):
    _, rows = _read_rows(path)
    a = np.array([[float(x) for x in row] for row in rows]).reshape(-1, 4)
    return a[:, 0] + 1j * a[:, 1], a[:, 2] + 1j * a[:, 3]


def write_curves(directory, components, prefix="component", bundle=False) -> list[str]:
    """One CSV per component plus ``<prefix>s.json``; with ``bundle`` also a
    single plot-ready JSON holding manifest entries and polylines."""
    directory = Path(directory)
    names, entries = [], []
    for i, comp in enumerate(components):
        name = "%s_%03d.csv" % (prefix, i)
        write_curve_csv(directory / name, comp)
        entry = {"file": name, **comp.manifest()}
        entries.append(entry)
        names.append(name)
    manifest = "%ss.json" % prefix
    write_json(directory / manifest, {"components": entries})
    names.append(manifest)
    if bundle:
        write_json(directory / "bundle.json", {
            "components": [dict(e, polyline=[[p.real, p.imag] for p in c.points])
                           for e, c in zip(entries, components)]})
        names.append("bundle.json")
    return names


def read_curves(directory, prefix="component") -> list[CurveComponent]:
    directory = Path(directory)
    out = []
    for e in read_json(directory / ("%ss.json" % prefix))["components"]:
        pts, vals = read_curve_csv(directory / e["file"])
        out.append(CurveComponent(pts, vals, constraint_from_dict(e["constraint"]),
                                  tuple(e["ends"]), e["classification"], e["strip_index"],
                                  e["step"]))
    return out


# --- reports --------------------------------------------------------------------

def write_report_json(path, report: VerificationReport):
    write_json(path, report.to_dict())


def read_report_json(path) -> VerificationReport:
    return VerificationReport.from_dict(read_json(path))


def write_report_csv(path, reports):
    rows = []
    for rep in reports:
        for r, m, t, d, ok in zip(rep.radii, rep.measured, rep.targets, rep.deviations,
                                  rep.passed):
            rows.append([rep.identity, float(r), float(m), float(t), float(d), bool(ok)])
    _write_rows(path, REPORT_COLUMNS, rows)


def read_report_csv(path) -> list[dict]:
    header, rows = _read_rows(path)
    out = []
    for row in rows:
        d = dict(zip(header, row))
        out.append({"identity": d["identity"], "r": float(d["r"]),
                    "measured": float(d["measured"]), "target": float(d["target"]),
                    "deviation": float(d["deviation"]), "pass": d["pass"] == "true"})
    return out
