import csv
import json
import math

import numpy as np
import pytest

from poetpfa.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, UsageError, main, parse_thresholds
from poetpfa.sim import SimulationConfig, generate_dataset


def write_data(path, x, names=None):
    names = names or [f"v{j}" for j in range(x.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        w.writerows(x.tolist())
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


@pytest.fixture
def factor_data(tmp_path):
    d = generate_dataset(SimulationConfig(p=300, n=100, p1=20, rounds=1, seed=3), 0)
    return write_data(tmp_path / "x.csv", d.x)


class TestParsing:
    def test_help(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "simulate" in capsys.readouterr().out

    def test_no_command(self):
        assert main([]) == EXIT_USAGE

    def test_threshold_list(self):
        assert parse_thresholds("0.05,0.01,0.05").tolist() == [0.01, 0.05]

    def test_threshold_ranges(self):
        assert np.allclose(parse_thresholds("0.1:0.3:3"), [0.1, 0.2, 0.3])
        assert np.allclose(parse_thresholds("1e-4:1e-2:3log"), [1e-4, 1e-3, 1e-2])

    @pytest.mark.parametrize("text", ["", "0", "1", "0.5,abc", "0.1:0.2", "0.1:0.2:0", "-0.1"])
    def test_bad_thresholds(self, text):
        with pytest.raises(UsageError):
            parse_thresholds(text)

    def test_bad_flag_value(self, tmp_path):
        assert main(["simulate", "--rounds", "x", "--out-dir", str(tmp_path)]) == EXIT_USAGE
        assert main(["simulate", "--preset", "table2", "--ks", "3,4", "--out-dir", str(tmp_path)]) == EXIT_USAGE
        assert main(["simulate", "--preset", "kauto", "--k", "3", "--out-dir", str(tmp_path)]) == EXIT_USAGE

    def test_bad_threshold_exit_code(self, tmp_path, factor_data):
        assert main(["fdp", "--data", str(factor_data), "--t", "2", "--out-dir", str(tmp_path)]) == EXIT_USAGE
        assert main(["fdp", "--data", str(factor_data), "--rank", "0", "--out-dir", str(tmp_path)]) == EXIT_USAGE


class TestDataErrors:
    def test_missing_file(self, tmp_path, capsys):
        assert main(["fdp", "--data", str(tmp_path / "none.csv"), "--out-dir", str(tmp_path)]) == EXIT_FAILURE

    def test_non_numeric_cell(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3,x\n")
        assert main(["fdp", "--data", str(path), "--out-dir", str(tmp_path)]) == EXIT_FAILURE
        err = capsys.readouterr().err
        assert "row 3, column 2" in err and "'x'" in err

    def test_ragged_row(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3\n")
        assert main(["fdp", "--data", str(path), "--out-dir", str(tmp_path)]) == EXIT_FAILURE
        assert "row 3" in capsys.readouterr().err

    def test_groups_need_two_labels(self, tmp_path, factor_data):
        g = tmp_path / "g.csv"
        g.write_text("\n".join(["a"] * 100) + "\n")
        assert main(["fdp", "--data", str(factor_data), "--groups", str(g), "--out-dir", str(tmp_path)]) == EXIT_FAILURE

    def test_output_dir_created(self, tmp_path, factor_data):
        out = tmp_path / "no" / "such"
        assert main(["fdp", "--data", str(factor_data), "--k", "0", "--out-dir", str(out)]) == EXIT_OK
        assert (out / "fdp_report.csv").exists()

    def test_output_dir_is_a_file(self, tmp_path, factor_data):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["fdp", "--data", str(factor_data), "--k", "0", "--out-dir", str(blocker)]) == EXIT_FAILURE


class TestFdp:
    def test_zero_factors_is_pt_over_r(self, tmp_path, factor_data):
        ts = "0.001,0.01,0.05,0.2"
        assert main(["fdp", "--data", str(factor_data), "--k", "0", "--t", ts, "--out-dir", str(tmp_path)]) == EXIT_OK
        header, rows = read_csv(tmp_path / "fdp_report.csv")
        assert header == ["t", "R", "V_hat", "fdp_hat", "fdp_hat_capped"]
        for row in rows:
            t, R, v, fdp = float(row[0]), int(row[1]), float(row[2]), float(row[3])
            assert abs(v - 300 * t) <= 1e-10
            assert fdp == (0.0 if R == 0 else pytest.approx(300 * t / R, rel=1e-12))

    def test_auto_k_recovers_three(self, tmp_path, factor_data):
        assert main(["fdp", "--data", str(factor_data), "--out-dir", str(tmp_path), "--rank", "5"]) == EXIT_OK
        m = manifest(tmp_path)
        assert m["results"]["k_hat"] == 3
        assert len(m["results"]["W_hat"]) == 3
        _, rows = read_csv(tmp_path / "ranking.csv")
        assert [r[0] for r in rows] == ["1", "2", "3", "4", "5"]

    def test_two_sample_scale(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(15, 40))
        data = write_data(tmp_path / "x.csv", x)
        g = tmp_path / "g.csv"
        g.write_text("group\n" + "\n".join(["case"] * 7 + ["control"] * 8) + "\n")
        args = ["fdp", "--data", str(data), "--groups", str(g), "--k", "1", "--out-dir", str(tmp_path)]
        assert main(args) == EXIT_OK
        res = manifest(tmp_path)["results"]
        assert res["statistic_scale"] == pytest.approx(math.sqrt(56 / 15), abs=1e-12)
        assert res["design"] == {"kind": "two_sample", "groups": ["case", "control"], "sizes": [7, 8]}

    def test_manifest_contents(self, tmp_path, factor_data):
        main(["fdp", "--data", str(factor_data), "--k", "2", "--out-dir", str(tmp_path)])
        m = manifest(tmp_path)
        for key in ("command", "argv", "config", "results", "artifact_version", "seed", "inputs", "outputs", "timestamps"):
            assert key in m
        assert m["argv"][:1] == ["fdp"]
        assert "--out-dir" not in m["argv"]
        assert set(m["outputs"]) == {"fdp_report.csv"}

    def test_figure(self, tmp_path, factor_data):
        assert main(["fdp", "--data", str(factor_data), "--k", "3", "--figures", "--out-dir", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "fdp_curve.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestAdjust:
    def run(self, out, data, *extra):
        return main(["adjust", "--data", str(data), "--out-dir", str(out), *extra])

    def test_columns(self, tmp_path, factor_data):
        assert self.run(tmp_path, factor_data, "--k", "3", "--rank", "10") == EXIT_OK
        header, rows = read_csv(tmp_path / "adjusted_report.csv")
        assert len(header) == 9 and all(len(r) == 9 for r in rows)
        _, ranked = read_csv(tmp_path / "ranking.csv")
        z_adj = [abs(float(r[2])) for r in ranked]
        assert z_adj == sorted(z_adj, reverse=True)

    def test_zero_factors_identity(self, tmp_path, factor_data):
        assert self.run(tmp_path, factor_data, "--k", "0") == EXIT_OK
        _, rows = read_csv(tmp_path / "adjusted_statistics.csv")
        for _, z, p, za, pa in rows:
            assert float(z) == float(za) and float(p) == float(pa)
        _, report = read_csv(tmp_path / "adjusted_report.csv")
        for r in report:
            assert r[1:5] == r[5:9]

    def test_byte_identical_reruns(self, tmp_path, factor_data):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir(), b.mkdir()
        for d in (a, b):
            assert self.run(d, factor_data, "--rank", "20", "--figures") == EXIT_OK
        for name in ("adjusted_report.csv", "adjusted_statistics.csv", "ranking.csv", "adjusted_curve.png"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        assert manifest(a)["outputs"] == manifest(b)["outputs"]


class TestSimulateAndReplay:
    def test_small_simulation(self, tmp_path):
        args = ["simulate", "--preset", "table2", "--p", "200", "--p1", "10", "--rounds", "3", "--seed", "7", "--out-dir", str(tmp_path)]
        assert main(args) == EXIT_OK
        header, rows = read_csv(tmp_path / "rounds.csv")
        assert len(rows) == 3 and header[0] == "round"
        m = manifest(tmp_path)
        assert m["seed"] == 7 and m["config"]["n"] == 100 and m["config"]["sigma_u_kind"] == "strict"
        assert "--n" in m["argv"] and m["argv"][m["argv"].index("--n") + 1] == "100"

    @pytest.mark.slow
    def test_table2_hundred_rounds(self, tmp_path):
        args = ["simulate", "--preset", "table2", "--n", "100", "--rounds", "100", "--seed", "7", "--out-dir", str(tmp_path)]
        assert main(args) == EXIT_OK
        _, rows = read_csv(tmp_path / "rounds.csv")
        assert len(rows) == 100

    @pytest.mark.parametrize("preset", ["krobust", "power"])
    def test_other_presets(self, tmp_path, preset):
        args = ["simulate", "--preset", preset, "--p", "200", "--rounds", "2", "--figures", "--out-dir", str(tmp_path)]
        if preset == "krobust":
            args += ["--ks", "3,4", "--p1", "10"]
        else:
            args += ["--p1", "20"]
        assert main(args) == EXIT_OK
        assert (tmp_path / "result.json").exists()
        assert any(p.suffix == ".png" for p in tmp_path.iterdir())

    def test_replay_identical(self, tmp_path, capsys):
        first = tmp_path / "first"
        first.mkdir()
        args = ["simulate", "--preset", "table1", "--p", "150", "--p1", "10", "--rounds", "2", "--figures", "--out-dir", str(first)]
        assert main(args) == EXIT_OK
        again = tmp_path / "again"
        again.mkdir()
        capsys.readouterr()
        assert main(["replay", "--manifest", str(first / "manifest.json"), "--out-dir", str(again)]) == EXIT_OK
        out = capsys.readouterr().out
        lines = [line.split() for line in out.splitlines() if line.startswith(("identical", "DIFFERS"))]
        assert lines == [["identical", "fdp_scatter.png"], ["identical", "result.json"], ["identical", "rounds.csv"]]

    def test_replay_detects_changed_input(self, tmp_path, factor_data):
        out = tmp_path / "o"
        out.mkdir()
        assert main(["fdp", "--data", str(factor_data), "--k", "1", "--out-dir", str(out)]) == EXIT_OK
        with open(factor_data, "a") as fh:
            fh.write(",".join(["0"] * 300) + "\n")
        assert main(["replay", "--manifest", str(out / "manifest.json")]) == EXIT_FAILURE
