import csv
import io
import json
import math

import numpy as np
import pytest

from perron_chain import (
    DomainError,
    DuplicateEntry,
    FiniteMatrix,
    FiniteMetzler,
    LazyMatrix,
    NegativeOffDiagonal,
    ParseError,
    cli,
    read_matrix,
    write_matrix,
)


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(41)
    a = rng.uniform(0.1, 1.0, size=(6, 6)) * (rng.random((6, 6)) < 0.5)
    a[0, 1] = 1.0 / 3.0
    a[1, 0] = math.pi
    path = tmp_path / "a.mtx"
    write_matrix(path, FiniteMatrix(a))
    back = read_matrix(path)
    assert isinstance(back, FiniteMatrix)
    assert np.array_equal(back.dense(), FiniteMatrix(a).dense())


def test_round_trip_metzler(tmp_path):
    g = FiniteMetzler([[-2.0, 1.0], [1.0, -2.0]])
    path = tmp_path / "g.mtx"
    write_matrix(path, g)
    back = read_matrix(path)
    assert isinstance(back, FiniteMetzler)
    assert np.array_equal(back.g, g.g)


def test_write_rejects_lazy(tmp_path):
    with pytest.raises(DomainError):
        write_matrix(tmp_path / "x.mtx", LazyMatrix(lambda i: [(i + 1, 1.0)]))


def _write(tmp_path, text, name="m.mtx"):
    path = tmp_path / name
    path.write_text(text)
    return path


GOOD = """%%MatrixMarket matrix coordinate real general
2 2 2
1 2 2.0
2 1 2.0
"""


def test_read_minimal_file(tmp_path):
    m = read_matrix(_write(tmp_path, GOOD))
    assert m.dense().tolist() == [[0.0, 2.0], [2.0, 0.0]]


def test_read_rejects_bad_headers(tmp_path):
    with pytest.raises(ParseError):
        read_matrix(_write(tmp_path, "2 2 2\n1 2 2.0\n2 1 2.0\n"))
    with pytest.raises(ParseError):
        read_matrix(_write(tmp_path,
                           "%%MatrixMarket matrix coordinate complex general\n2 2 0\n"))
    with pytest.raises(ParseError):
        read_matrix(_write(tmp_path, "%%MatrixMarket matrix array real general\n2 2\n"))


def test_read_rejects_malformed_bodies(tmp_path):
    with pytest.raises(ParseError):  # no size line at all
        read_matrix(_write(tmp_path, "%%MatrixMarket matrix coordinate real general\n"))
    with pytest.raises(DomainError):  # not square
        read_matrix(_write(tmp_path,
                           "%%MatrixMarket matrix coordinate real general\n2 3 1\n1 2 1.0\n"))
    with pytest.raises(ParseError):  # promised 3, only 2 present
        read_matrix(_write(tmp_path,
                           "%%MatrixMarket matrix coordinate real general\n"
                           "2 2 3\n1 2 1.0\n2 1 1.0\n"))
    with pytest.raises(ParseError):  # index out of range
        read_matrix(_write(tmp_path,
                           "%%MatrixMarket matrix coordinate real general\n"
                           "2 2 1\n3 1 1.0\n"))
    with pytest.raises(ParseError):  # not a number
        read_matrix(_write(tmp_path,
                           "%%MatrixMarket matrix coordinate real general\n"
                           "2 2 1\n1 2 abc\n"))


def test_read_rejects_duplicates(tmp_path):
    with pytest.raises(DuplicateEntry):
        read_matrix(_write(tmp_path,
                           "%%MatrixMarket matrix coordinate real general\n"
                           "2 2 2\n1 2 1.0\n1 2 2.0\n"))


def test_read_rejects_negative_off_diagonal(tmp_path):
    with pytest.raises(NegativeOffDiagonal):
        read_matrix(_write(tmp_path,
                           "%%MatrixMarket matrix coordinate real general\n"
                           "2 2 2\n1 2 -1.0\n2 1 1.0\n"))


def test_read_warns_on_explicit_zeros(tmp_path):
    path = _write(tmp_path,
                  "%%MatrixMarket matrix coordinate real general\n"
                  "2 2 3\n1 2 1.0\n2 1 1.0\n1 1 0.0\n")
    with pytest.warns(UserWarning, match="explicit zero"):
        m = read_matrix(path)
    assert m.dense()[0, 0] == 0.0


def test_read_detects_metzler(tmp_path):
    path = _write(tmp_path,
                  "%%MatrixMarket matrix coordinate real general\n"
                  "2 2 3\n1 1 -2.0\n1 2 1.0\n2 1 1.0\n")
    m = read_matrix(path)
    assert isinstance(m, FiniteMetzler)
    # comments and blank lines are fine anywhere after the header
    path2 = _write(tmp_path,
                   "%%MatrixMarket matrix coordinate real general\n"
                   "% a comment\n\n2 2 2\n1 2 1.0\n\n2 1 1.0\n", name="c.mtx")
    assert read_matrix(path2).dense().tolist() == [[0.0, 1.0], [1.0, 0.0]]


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def run_cli(capsys, argv):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_cli_analyze_json(tmp_path, capsys):
    path = _write(tmp_path, GOOD)
    code, out, _ = run_cli(capsys, ["analyze", "--input", str(path)])
    assert code == 0
    report = json.loads(out)
    assert report["tool"] == "perron-chain"
    assert report["mode"] == "analyze"
    assert report["config"]["seed"] == 0x5EED
    conv = report["result"]["convergence"]
    assert conv["R"] == 0.5
    assert conv["method"] == "dense-oracle"
    assert report["result"]["classification"] is None


def test_cli_analyze_with_classification(tmp_path, capsys):
    path = _write(tmp_path, GOOD)
    code, out, _ = run_cli(capsys, ["analyze", "--input", str(path), "--R", "0.4"])
    assert code == 0
    verdict = json.loads(out)["result"]["classification"]
    assert verdict["classification"] == "R-transient"


def test_cli_eig_series_model_reference_R(capsys):
    code, out, _ = run_cli(capsys, ["eig-series", "--model", "srw:p=0.3"])
    assert code == 0
    report = json.loads(out)
    assert report["result"]["R_source"] == "model-reference"
    assert report["result"]["pair"]["restricted"] is True
    assert report["result"]["pair"]["u"]["0"] == 1.0


def test_cli_flag_R_wins(tmp_path, capsys):
    path = _write(tmp_path, GOOD)
    code, out, _ = run_cli(capsys, ["eig-series", "--input", str(path),
                                    "--R", "0.25"])
    assert code == 0
    report = json.loads(out)
    assert report["result"]["R_source"] == "flag"
    assert report["result"]["R"] == 0.25


def test_cli_eig_mc(tmp_path, capsys):
    path = _write(tmp_path, GOOD)
    code, out, _ = run_cli(capsys, ["eig-mc", "--input", str(path),
                                    "--excursions", "640", "--batches", "32"])
    assert code == 0
    report = json.loads(out)
    est = report["result"]["estimate"]
    assert est["estimate"]["1"] == 1.0
    assert est["n_completed"] == 640
    assert report["result"]["R_source"] == "computed-finite"


def test_cli_eig_mc_metzler_model(capsys):
    code, out, _ = run_cli(capsys, ["eig-mc", "--model", "metzler-tri:diag=-2,off=1",
                                    "--excursions", "320", "--batches", "32",
                                    "--horizon", "500"])
    assert code == 0
    report = json.loads(out)
    assert report["result"]["R"] is None
    assert report["result"]["R_source"] == "spectral-bound"
    assert report["result"]["lambda"] == pytest.approx(0.0, abs=2e-3)
    assert report["result"]["estimate"]["note"]


def test_cli_metzler_mode(tmp_path, capsys):
    g = FiniteMetzler([[-2.0, 1.0], [1.0, -2.0]])
    path = tmp_path / "g.mtx"
    write_matrix(path, g)
    code, out, _ = run_cli(capsys, ["metzler", "--input", str(path)])
    assert code == 0
    report = json.loads(out)
    assert report["result"]["spectral"]["lambda"] == pytest.approx(-1.0, abs=1e-9)
    assert report["result"]["vector"]["u"]["0"] == pytest.approx(1.0, abs=1e-10)
    assert report["result"]["vector"]["hypotheses_ok"] is True


def test_cli_metzler_mode_coerces_nonnegative_input(tmp_path, capsys):
    path = _write(tmp_path, GOOD)
    code, out, _ = run_cli(capsys, ["metzler", "--input", str(path)])
    assert code == 0
    report = json.loads(out)
    assert report["result"]["spectral"]["lambda"] == pytest.approx(2.0, abs=1e-9)


def test_cli_exit_codes(tmp_path, capsys):
    # parse and domain problems -> 2
    assert run_cli(capsys, ["analyze", "--input", str(tmp_path / "nope.mtx")])[0] == 2
    assert run_cli(capsys, ["analyze", "--model", "madeup:x=1"])[0] == 2
    assert run_cli(capsys, ["analyze"])[0] == 2
    path = _write(tmp_path, GOOD)
    assert run_cli(capsys, ["analyze", "--input", str(path),
                            "--model", "srw:p=0.3"])[0] == 2
    assert run_cli(capsys, ["metzler", "--model", "srw:p=0.3"])[0] == 2
    # unmet hypotheses -> 3
    red = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n"
                           "2 2 3\n1 1 1.0\n1 2 1.0\n2 2 1.0\n", name="red.mtx")
    code, _, err = run_cli(capsys, ["analyze", "--input", str(red)])
    assert code == 3
    assert "irreducible" in err
    # numerical failure -> 4
    ones = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n"
                            "2 2 4\n1 1 1.0\n1 2 1.0\n2 1 1.0\n2 2 1.0\n",
                  name="ones.mtx")
    assert run_cli(capsys, ["eig-series", "--input", str(ones), "--R", "2.0"])[0] == 4


def test_cli_metzler_rejected_by_nonneg_modes(tmp_path, capsys):
    g = FiniteMetzler([[-2.0, 1.0], [1.0, -2.0]])
    path = tmp_path / "g.mtx"
    write_matrix(path, g)
    code, _, err = run_cli(capsys, ["analyze", "--input", str(path)])
    assert code == 2
    assert "metzler" in err.lower()


def test_cli_csv_output(tmp_path, capsys):
    path = _write(tmp_path, GOOD)
    code, out, _ = run_cli(capsys, ["analyze", "--input", str(path),
                                    "--format", "csv"])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["key", "value"]
    assert all(len(r) == 2 for r in rows[1:])
    table = dict(rows[1:])
    assert float(table["result.convergence.R"]) == 0.5
    assert table["config.radii"] == "8,16,32,64"  # quoting survives the commas
    assert table["result.convergence.recurrence"] == "R-recurrent"


def test_cli_output_file(tmp_path, capsys):
    path = _write(tmp_path, GOOD)
    target = tmp_path / "report.json"
    code, out, _ = run_cli(capsys, ["analyze", "--input", str(path),
                                    "--output", str(target)])
    assert code == 0
    assert out == ""
    assert json.loads(target.read_text())["result"]["convergence"]["R"] == 0.5


def test_cli_threads_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PERRON_CHAIN_THREADS", "3")
    path = _write(tmp_path, GOOD)
    code, out, _ = run_cli(capsys, ["eig-mc", "--input", str(path),
                                    "--excursions", "320", "--batches", "32"])
    assert code == 0
    assert json.loads(out)["config"]["threads"] == 3


def test_cli_seed_accepts_hex(tmp_path, capsys):
    path = _write(tmp_path, GOOD)
    code, out, _ = run_cli(capsys, ["eig-mc", "--input", str(path),
                                    "--excursions", "320", "--batches", "32",
                                    "--seed", "0x10"])
    assert code == 0
    assert json.loads(out)["config"]["seed"] == 16


def test_cli_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "perron-chain" in out


def test_cli_nan_becomes_null(tmp_path, capsys):
    # single-batch runs have no SE; strict JSON must carry null, not NaN
    path = _write(tmp_path, GOOD)
    code, out, _ = run_cli(capsys, ["eig-mc", "--input", str(path),
                                    "--excursions", "32", "--batches", "1"])
    assert code == 0
    assert "NaN" not in out
    report = json.loads(out)
    assert report["result"]["estimate"]["se"]["1"] is None
