import csv
import io
import json
import subprocess
import sys

import pytest

from nonuniform_cs.cli import build_parser, main

MODEL_FLAGS = ["--gamma", "0.5,0.5", "--p", "0.4,0.05"]


def body(path):
    return "".join(line for line in path.read_text().splitlines(True) if not line.startswith("#"))


def rows(path):
    return list(csv.DictReader(io.StringIO(body(path))))


class TestExitCodes:
    def test_threshold(self, tmp_path, capsys):
        code = main(["threshold", *MODEL_FLAGS, "--omega", "1,2.5", "--kind", "weak", "--grid", "60", "--out", str(tmp_path)])
        assert code == 0
        (row,) = rows(tmp_path / "threshold.csv")
        assert 0 < float(row["delta_c"]) < 1
        assert "delta_c" in capsys.readouterr().out

    def test_bad_gamma(self, tmp_path, capsys):
        code = main(["threshold", "--gamma", "0.6,0.5", "--p", "0.4,0.05", "--out", str(tmp_path)])
        assert code == 2
        assert "class fractions must sum to 1" in capsys.readouterr().err

    def test_length_mismatch(self, tmp_path):
        assert main(["threshold", "--gamma", "0.5,0.5", "--p", "0.4", "--out", str(tmp_path)]) == 2

    def test_infeasible(self, tmp_path):
        code = main(["threshold", "--gamma", "1", "--p", "0.2", "--kind", "strong", "--grid", "60", "--out", str(tmp_path)])
        assert code == 1
        assert json.loads((tmp_path / "threshold.manifest.json").read_text())["status"] == "infeasible"

    def test_simulate_requires_seed(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", *MODEL_FLAGS, "--omegas", "1", "--deltas", "0.5", "--n", "20", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_unparseable_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["exponents", "--gamma", "a,b", "--p", "0.1,0.1", "--tau", "0,0"])
        assert exc.value.code == 2

    def test_strong_not_below_weak(self, tmp_path):
        vals = {}
        for kind in ("weak", "strong"):
            out = tmp_path / kind
            assert main(["threshold", "--gamma", "1", "--p", "0.05", "--kind", kind, "--grid", "60", "--out", str(out)]) == 0
            vals[kind] = float(rows(out / "threshold.csv")[0]["delta_c"])
        assert vals["strong"] >= vals["weak"]


class TestOutputs:
    def test_exponents_columns(self, tmp_path):
        assert main(["exponents", *MODEL_FLAGS, "--omega", "1,2.5", "--tau", "0.05,0.1", "--out", str(tmp_path)]) == 0
        (row,) = rows(tmp_path / "exponents.csv")
        assert list(row) == ["psi_com", "psi_int", "psi_ext", "psi_tot"]
        assert float(row["psi_ext"]) == pytest.approx(0.43805385377234877, rel=1e-10)
        tot = float(row["psi_com"]) - float(row["psi_int"]) - float(row["psi_ext"])
        assert float(row["psi_tot"]) == pytest.approx(tot, abs=1e-15)

    def test_bound_and_terms(self, tmp_path):
        args = ["bound", "--n", "40", "--n1", "20", "--k1", "4", "--k2", "1", "--m", "30", "--w", "1,2",
                "--seed", "7", "--mc-samples", "2000", "--out", str(tmp_path)]
        assert main(args) == 0
        (row,) = rows(tmp_path / "bound.csv")
        terms = rows(tmp_path / "bound-terms.csv")
        assert int(row["terms"]) == len(terms) > 0
        assert float(row["unclamped"]) == pytest.approx(sum(float(t["term"]) for t in terms), rel=1e-12)
        assert 0 <= float(row["bound"]) <= 1

    def test_manifest(self, tmp_path):
        args = ["simulate", *MODEL_FLAGS, "--omegas", "1,2", "--deltas", "0.5", "--n", "20", "--trials", "3",
                "--seed", "5", "--out", str(tmp_path)]
        assert main(args) == 0
        man = json.loads((tmp_path / "simulate.manifest.json").read_text())
        assert man["seed"] == 5
        assert man["parameters"]["omegas"] == [1.0, 2.0]
        assert "simulate.csv" in man["outputs"]
        assert man["started"] <= man["finished"]
        header = (tmp_path / "simulate.csv").read_text().splitlines()[:3]
        assert header[2] == f"# config_sha256: {man['config_sha256']}"

    def test_rerun_is_byte_identical(self, tmp_path):
        base = ["reweighted", "--n", "30", "--m", "18", "--k", "2:8:3", "--trials", "3", "--seed", "9"]
        assert main([*base, "--out", str(tmp_path / "a")]) == 0
        assert main([*base, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
        for name in ("reweighted.csv", "reweighted-crossover.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_reproduces_outputs(self, tmp_path):
        args = ["noisy", *MODEL_FLAGS, "--omegas", "1,3", "--n", "20", "--m", "12", "--snr", "10,inf",
                "--trials", "2", "--seed", "4", "--out", str(tmp_path / "a")]
        assert main(args) == 0
        man = json.loads((tmp_path / "a" / "noisy.manifest.json").read_text())
        p = man["parameters"]
        again = ["noisy", "--gamma", ",".join(map(str, p["gamma"])), "--p", ",".join(map(str, p["p"])),
                 "--omegas", ",".join(map(str, p["omegas"])), "--n", str(p["n"]), "--m", str(p["m"]),
                 "--snr", ",".join(map(str, p["snr"])), "--trials", str(p["trials"]), "--seed", str(p["seed"]),
                 "--out", str(tmp_path / "b")]
        assert main(again) == 0
        for name in ("noisy.csv", "noisy-trials.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_angles(self, tmp_path):
        args = ["angles", "--sizes", "3", "--k", "1", "--t", "2", "--w", "1", "--mc-samples", "20000",
                "--seed", "1", "--out", str(tmp_path)]
        assert main(args) == 0
        (row,) = rows(tmp_path / "angles.csv")
        assert float(row["external_angle"]) == pytest.approx(0.5, rel=1e-12)
        assert float(row["internal_angle"]) == pytest.approx(1 / 6, abs=5 * float(row["internal_angle_stderr"]))

    def test_p1_sweep_envelope(self, tmp_path):
        args = ["p1-sweep", "--p2", "0.05", "--p1", "0.1,0.4", "--omegas", "2.5", "--n", "20", "--m", "10",
                "--trials", "3", "--seed", "2", "--out", str(tmp_path)]
        assert main(args) == 0
        env = rows(tmp_path / "p1-sweep-envelope.csv")
        assert all(float(r["envelope"]) >= float(r["baseline"]) for r in env)


class TestHelp:
    def test_every_flag_documented(self):
        parser = build_parser()
        sub = next(a for a in parser._actions if a.dest == "command")
        assert set(sub.choices) == {"threshold", "optimal-weight", "exponents", "angles", "bound", "simulate",
                                    "p1-sweep", "reweighted", "noisy"}
        for name, p in sub.choices.items():
            for action in p._actions:
                if action.dest != "help":
                    assert action.help, f"{name} {action.dest} has no help"

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "nonuniform_cs", "--help"], capture_output=True, text=True)
        assert out.returncode == 0
        assert "threshold" in out.stdout
