import csv
import io
import json

import numpy as np
import pytest

from stlmon import cli
from stlmon.system import read_text

from conftest import FIG2


def run(argv, stdin=None, monkeypatch=None):
    out = io.StringIO()
    if stdin is not None:
        monkeypatch.setattr("sys.stdin", stdin)
    code = cli.main(argv, out=out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def case1_artifact(tmp_path_factory):
    p = tmp_path_factory.mktemp("c1") / "case1.art.json"
    code, out = run(["precompute", "--system", "case1.json", "--formula", "case1.stl",
                     "--grid", "case1_grid.json", "--out", str(p)])
    assert code == 0
    return p, out


@pytest.fixture(scope="module")
def case2_artifact(tmp_path_factory):
    p = tmp_path_factory.mktemp("c2") / "case2.art.json"
    code, _ = run(["precompute", "--system", "case2.json", "--formula", "case2.stl",
                   "--grid", "case2_grid.json", "--out", str(p)])
    assert code == 0
    return p


def test_precompute_counts_and_determinism(case1_artifact, tmp_path):
    p, out = case1_artifact
    lines = out.splitlines()
    assert lines[11] == "k=11 op=G X=278 Xhat=278"
    assert lines[3].startswith("k=3 op=U' X=100")
    q = tmp_path / "again.json"
    run(["precompute", "--system", "case1.json", "--formula", "case1.stl",
         "--grid", "500", "--control-samples", "201", "--scheme", "corners_center", "--out", str(q)])
    assert q.read_bytes() == p.read_bytes()


def test_precompute_overlap(tmp_path):
    f = tmp_path / "o.stl"
    f.write_text("F[0,5] (x1 in [0,1]) & F[3,8] (x1 in [2,3])")
    code, _ = run(["precompute", "--system", "case1.json", "--formula", str(f), "--grid", "20",
                   "--out", str(tmp_path / "o.json")])
    assert code == 3


def test_precompute_validation(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x"}')
    assert run(["precompute", "--system", str(bad), "--formula", "case1.stl", "--grid", "20",
                "--out", str(tmp_path / "a")])[0] == 2
    assert run(["precompute", "--system", "case1.json", "--formula", "case1.stl",
                "--out", str(tmp_path / "a")])[0] == 2
    assert run(["precompute", "--system", "case1.json", "--formula", "nope.stl", "--grid", "20",
                "--out", str(tmp_path / "a")])[0] == 2


def test_outer_mode_caveat(tmp_path, capsys):
    code, _ = run(["precompute", "--system", "case1.json", "--formula", "coarse.stl", "--grid", "25",
                   "--mode", "outer", "--out", str(tmp_path / "o.json")])
    assert code == 0 and "miss alarms" in capsys.readouterr().err


def test_monitor_fig2(case1_artifact):
    p, _ = case1_artifact
    code, out = run(["monitor", "--artifact", str(p), "--formula", "case1.stl", "--trace", "fig2_trace.csv"])
    rows = [json.loads(line) for line in out.splitlines()]
    assert code == 10
    assert [r["verdict"] for r in rows] == ["feasible"] * 11 + ["violated"]
    assert rows[-1]["k"] == 11
    assert out == read_text("expected_fig2_verdicts.jsonl")
    code2, out2 = run(["monitor", "--artifact", str(p), "--formula", "case1.stl", "--trace", "fig2_trace.jsonl"])
    assert (code2, out2) == (code, out)


def test_monitor_baseline(case1_artifact):
    p, _ = case1_artifact
    code, out = run(["monitor", "--artifact", str(p), "--formula", "case1.stl",
                     "--trace", "fig2_trace.csv", "--baseline"])
    rows = [json.loads(line) for line in out.splitlines()]
    assert code == 10
    base = [r for r in rows if r.get("stream") == "baseline"]
    assert len(base) == 12 and all(r["verdict"] == "feasible" for r in base)
    assert rows[-1] == {"summary": {"model_violation": 11, "baseline_violation": None,
                                    "observed": 12, "lead": 1}}


class Lines(io.StringIO):
    """Standard input that fails if the monitor reads past ``stop`` lines."""

    def __init__(self, lines, stop):
        super().__init__()
        self._lines, self._stop, self.read_count = lines, stop, 0

    def __iter__(self):
        for line in self._lines:
            if self.read_count >= self._stop:
                raise AssertionError("monitor read past the violation")
            self.read_count += 1
            yield line


def test_monitor_streams_stdin(case1_artifact, monkeypatch):
    p, _ = case1_artifact
    lines = ["k,x1\n"] + [f"{k},{x}\n" for k, x in enumerate(FIG2)] + ["12,0.5\n"]
    src = Lines(lines, stop=13)
    code, out = run(["monitor", "--artifact", str(p), "--formula", "case1.stl"], src, monkeypatch)
    assert code == 10 and src.read_count == 13 and len(out.splitlines()) == 12


def test_monitor_malformed(case1_artifact, tmp_path, capsys):
    p, _ = case1_artifact
    t = tmp_path / "t.csv"
    t.write_text("k,x1\n0,3\n1,abc\n")
    code, _ = run(["monitor", "--artifact", str(p), "--formula", "case1.stl", "--trace", str(t)])
    assert code == 2 and "line 3" in capsys.readouterr().err
    t.write_text("k,x1\n0,3\n2,3\n")
    code, _ = run(["monitor", "--artifact", str(p), "--formula", "case1.stl", "--trace", str(t)])
    assert code == 2 and "line 3" in capsys.readouterr().err
    t.write_text('{"k": 0, "x": [3]}\n{"k": 1}\n')
    code, _ = run(["monitor", "--artifact", str(p), "--formula", "case1.stl", "--trace", str(t)])
    assert code == 2 and "line 2" in capsys.readouterr().err


def test_monitor_provenance(case1_artifact):
    p, _ = case1_artifact
    code, _ = run(["monitor", "--artifact", str(p), "--formula", "coarse.stl", "--trace", "fig2_trace.csv"])
    assert code == 2


def test_monitor_witness(tmp_path):
    from stlmon.oracle import ControlLattice, witness_controls
    from stlmon.stl import parse_formula, segment
    from stlmon.system import load_system, simulate
    model = load_system("case1.json")
    sf = segment(parse_formula(read_text("coarse.stl")), [(0, 5)])
    art = tmp_path / "w.json"
    assert run(["precompute", "--system", "case1.json", "--formula", "coarse.stl", "--grid", "500",
                "--control-samples", "201", "--out", str(art)])[0] == 0
    u = witness_controls(model, sf, 0, [2.0], ControlLattice(5))
    pts = np.vstack([[2.0], simulate(model, [2.0], u).points])
    t = tmp_path / "w.jsonl"
    t.write_text("".join(json.dumps({"k": k, "x": x.tolist()}) + "\n" for k, x in enumerate(pts)))
    code, out = run(["monitor", "--artifact", str(art), "--formula", "coarse.stl", "--trace", str(t)])
    assert code == 0 and len(out.splitlines()) == 5
    assert run(["eval", "--formula", "coarse.stl", "--trace", str(t)]) == (0, "true\n")


def test_monitor_fig3(case2_artifact):
    code, out = run(["monitor", "--artifact", str(case2_artifact), "--formula", "case2.stl",
                     "--trace", "fig3_trace.jsonl"])
    rows = [json.loads(line) for line in out.splitlines()]
    assert code == 10
    # Violation is reported at k = 6: (5.5, 4.7) cannot reach A3's one-step set.
    assert rows[-1]["k"] == 6 and rows[-1]["verdict"] == "violated"
    assert out == read_text("expected_fig3_verdicts.jsonl")


def test_eval(tmp_path):
    t = tmp_path / "t.csv"
    t.write_text("k,x1\n0,0.5\n1,0.2\n2,0.9\n")
    f = tmp_path / "f.stl"
    f.write_text("G[0,2] (x1 in [0,1])")
    assert run(["eval", "--formula", str(f), "--trace", str(t)]) == (0, "true\n")
    f.write_text("F[0,2] (x1 in [2,3])")
    assert run(["eval", "--formula", str(f), "--trace", str(t)]) == (1, "false\n")
    f.write_text("F[0,5] (x1 in [2,3])")
    assert run(["eval", "--formula", str(f), "--trace", str(t)])[0] == 2


def test_oracle_check():
    code, out = run(["oracle-check", "--system", "case1.json", "--formula", "coarse.stl",
                     "--grid", "coarse_grid.json"])
    assert code == 0
    assert out.count("agreement=100.00%") == 5
    code, out = run(["oracle-check", "--system", "case1.json", "--formula", "coarse.stl",
                     "--grid", "coarse_grid.json", "--scheme", "corners_center"])
    assert code == 5 and "computed_vs_oracle=subset" in out


def test_oracle_check_errors(tmp_path):
    empty = tmp_path / "e.stl"
    empty.write_text("# nothing here\n")
    assert run(["oracle-check", "--system", "case1.json", "--formula", str(empty), "--grid", "25"])[0] == 2
    assert run(["oracle-check", "--system", "case1.json", "--formula", "case1.stl", "--grid", "50",
                "--control-samples", "21"])[0] == 4
    assert run(["oracle-check", "--system", "case1.json", "--formula", "coarse.stl", "--grid", "25",
                "--control-samples", "5", "--budget", "100"])[0] == 4


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_plotdata_case1(case1_artifact, tmp_path):
    p, _ = case1_artifact
    assert run(["plotdata", "--artifact", str(p), "--out", str(tmp_path)])[0] == 0
    rows = read_csv(tmp_path / "X.csv")
    by_k = {int(r["k"]): (float(r["interval_lo"]), float(r["interval_hi"])) for r in rows}
    assert by_k[11][1] == pytest.approx(2.7875, abs=0.02) and by_k[9] == (1.0, 3.0)
    assert (tmp_path / "X.csv").read_text() == read_text("expected_case1_X.csv")
    assert (tmp_path / "Xhat.csv").read_text() == read_text("expected_case1_Xhat.csv")


def test_plotdata_empty_set(tmp_path):
    art = tmp_path / "e.json"
    f = tmp_path / "e.stl"
    f.write_text("G[0,1] (x1 in [0,1]) & G[1,2] (x1 in [3,4])")
    assert run(["precompute", "--system", "case1.json", "--formula", str(f), "--grid", "50",
                "--out", str(art)])[0] == 0
    run(["plotdata", "--artifact", str(art), "--out", str(tmp_path)])
    ks = {r["k"] for r in read_csv(tmp_path / "X.csv")}
    assert ks == {"2"}


def test_plotdata_case2(case2_artifact, tmp_path):
    run(["plotdata", "--artifact", str(case2_artifact), "--out", str(tmp_path)])
    rows = [r for r in read_csv(tmp_path / "X.csv") if r["k"] == "7"]
    lo1 = min(float(r["lo1"]) for r in rows)
    hi1 = max(float(r["hi1"]) for r in rows)
    lo2 = min(float(r["lo2"]) for r in rows)
    hi2 = max(float(r["hi2"]) for r in rows)
    assert abs(lo1 - 6.1) <= 0.05 + 1e-9 and abs(hi1 - 9.9) <= 0.05 + 1e-9
    assert abs(lo2 - 0.2) <= 0.05 + 1e-9 and abs(hi2 - 3.8) <= 0.05 + 1e-9
