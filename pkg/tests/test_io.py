import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from zeromult import io
from zeromult.conformal import VerificationReport
from zeromult.curves import CirclePreimage, RealAxisPreimage, trace_components
from zeromult.handles import RiemannZeta
from zeromult.zeros import SearchRectangle, ZeroRecord, locate_zeros

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


def test_zero_roundtrip(tmp_path):
    recs = locate_zeros(RiemannZeta(), SearchRectangle(0, 1, 10, 30))
    io.write_zeros_csv(tmp_path / "z.csv", recs)
    io.write_zeros_json(tmp_path / "z.json", recs)
    assert io.read_zeros_json(tmp_path / "z.json") == recs
    rows = io.read_zeros_csv(tmp_path / "z.csv")
    assert [r["location"] for r in rows] == [r.location for r in recs]
    assert [r["multiplicity"] for r in rows] == [r.multiplicity for r in recs]
    assert (tmp_path / "z.csv").read_text().splitlines()[0] == ",".join(io.ZERO_COLUMNS)


def test_empty_zero_csv(tmp_path):
    io.write_zeros_csv(tmp_path / "z.csv", [])
    assert io.read_zeros_csv(tmp_path / "z.csv") == []


def test_curve_roundtrip(tmp_path):
    comps = trace_components(RiemannZeta(), SearchRectangle(-1, 4, 0.1, 20))
    names = io.write_curves(tmp_path, comps, bundle=True)
    assert "components.json" in names and "bundle.json" in names
    back = io.read_curves(tmp_path)
    assert len(back) == len(comps)
    for a, b in zip(comps, back):
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.values, b.values)
        assert a.constraint == b.constraint == RealAxisPreimage()
        assert a.ends == b.ends and a.classification == b.classification
        assert a.step == b.step
    bundle = io.read_json(tmp_path / "bundle.json")
    assert len(bundle["components"][0]["polyline"]) == comps[0].points.size


def test_report_roundtrip(tmp_path):
    rep = VerificationReport("area", [1e-3, 1e-2], [3.1e-6, 3.14e-4], [np.pi * 1e-6, np.pi * 1e-4],
                             [0.013, 0.0005], [False, True], 5e-3, {"components": [2, 1]})
    io.write_report_json(tmp_path / "r.json", rep)
    assert io.read_report_json(tmp_path / "r.json") == rep
    io.write_report_csv(tmp_path / "s.csv", [rep])
    rows = io.read_report_csv(tmp_path / "s.csv")
    assert rows == list(rep.rows())


def test_plain_handles_numpy():
    obj = {"a": np.float64(1.5), "b": np.arange(3), "c": 1 + 2j, "d": np.bool_(True),
           "e": (CirclePreimage(0.5).to_dict(),)}
    assert io.plain(obj) == {"a": 1.5, "b": [0, 1, 2], "c": [1.0, 2.0], "d": True,
                             "e": [{"type": "circle", "radius": 0.5}]}


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, finite, st.integers(1, 5), finite.map(abs), finite.map(abs)),
                max_size=8))
def test_zero_csv_roundtrip_property(rows):
    import tempfile
    from pathlib import Path
    recs = [ZeroRecord(complex(a, b), m, m, r, c) for a, b, m, r, c in rows]
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "z.csv"
        io.write_zeros_csv(p, recs)
        back = io.read_zeros_csv(p)
        q = Path(d) / "z.json"
        io.write_zeros_json(q, recs)
        assert io.read_zeros_json(q) == recs
    assert [b["location"] for b in back] == [r.location for r in recs]
    assert [b["residual"] for b in back] == [r.residual for r in recs]
