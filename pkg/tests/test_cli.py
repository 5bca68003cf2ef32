import json

import numpy as np
import pytest

from contattn import attention as att
from contattn import core_math as cm
from contattn.cli import main, matrix_from_json, matrix_to_json, InputError


def _json(path):
    return json.loads(path.read_text())


def _write_matrix(path, M):
    path.write_text(json.dumps(matrix_to_json(M)))
    return str(path)


def _csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1)


class TestMatrixJson:
    def test_roundtrip(self, rng):
        M = rng.normal(size=(3, 5))
        assert np.array_equal(matrix_from_json(json.loads(json.dumps(matrix_to_json(M)))), M)

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            matrix_from_json({"rows": 2, "cols": 2, "data": [[1, 2, 3]]})


class TestDensity:
    def test_epanechnikov(self, tmp_path):
        out = tmp_path / "tp.csv"
        assert main(["density", "--family", "truncated_parabola", "--sigma2", str(2 / 3), "--out", str(out)]) == 0
        side = _json(tmp_path / "tp.csv.json")
        assert abs(side["lambda"] + 0.75) <= 1e-12
        assert abs(side["mass"] - 1) <= 1e-8
        assert side["grid_points"] == 1001
        grid = _csv(out)
        assert grid.shape == (1001, 2) and np.all(grid[:, 1] >= 0)

    def test_gaussian_matches_pdf(self, tmp_path):
        out = tmp_path / "g.csv"
        assert main(["density", "--family", "gaussian", "--out", str(out)]) == 0
        t, p = _csv(out).T
        assert np.allclose(p, cm.gaussian_pdf(t, 0.0, 1.0), rtol=1e-15, atol=0)
        assert _json(tmp_path / "g.csv.json")["support"] is None

    def test_triangular_peak(self, tmp_path):
        out = tmp_path / "tri.csv"
        assert main(["density", "--family", "triangular", "--b", "1", "--out", str(out)]) == 0
        t, p = _csv(out).T
        i = np.argmax(p)
        assert t[i] == 0.0 and p[i] == 1.0

    def test_2d(self, tmp_path):
        out = tmp_path / "pb.csv"
        assert main(["density", "--family", "truncated_paraboloid", "--dim", "2", "--mu", "0,0",
                     "--cov", "1,0.2,0.2,0.5", "--out", str(out)]) == 0
        grid = _csv(out)
        assert grid.shape == (201 * 201, 3)
        assert np.all(grid[:, 2] >= 0)
        assert abs(_json(tmp_path / "pb.csv.json")["mass"] - 1) <= 1e-8

    @pytest.mark.parametrize("argv", [
        ["--family", "gaussian", "--sigma2", "-1"],
        ["--family", "triangular", "--b", "0"],
        ["--family", "location_scale", "--g", "nope"],
        ["--family", "truncated_paraboloid", "--mu", "0,0", "--cov", "1,2,2,1"],
        ["--family", "gaussian", "--mu", "abc"],
    ])
    def test_bad_input(self, argv, tmp_path):
        assert main(["density", *argv, "--out", str(tmp_path / "x.csv")]) == 2


class TestAttend:
    def test_identity_context(self, tmp_path):
        out = tmp_path / "a.json"
        B = _write_matrix(tmp_path / "B.json", np.eye(8))
        assert main(["attend", "--n-basis", "8", "--B", B, "--out", str(out)]) == 0
        res = _json(out)
        assert np.allclose(res["context"], res["r"], rtol=1e-15, atol=0)
        assert res["jacobian"]["rows"] == 2 and res["jacobian"]["cols"] == 8

    @pytest.mark.parametrize("alpha,dim", [(1, 1), (2, 1), (1, 2), (2, 2)])
    def test_check_passes(self, alpha, dim, tmp_path):
        out = tmp_path / "a.json"
        extra = ["--mu", "0.45,0.55", "--cov", "0.05,0.01,0.01,0.04", "--n-basis", "9",
                 "--basis-var", "0.01"] if dim == 2 else ["--mu", "0.4", "--sigma2", "0.02", "--n-basis", "6"]
        code = main(["attend", "--alpha", str(alpha), "--dim", str(dim), *extra, "--check", "--out", str(out)])
        chk = _json(out)["check"]
        assert code == 0 and chk["passed"]

    def test_angular_refinement(self, tmp_path):
        rs = []
        for n in (64, 512):
            out = tmp_path / f"a{n}.json"
            assert main(["attend", "--alpha", "2", "--dim", "2", "--mu", "0.5,0.5",
                         "--cov", "0.03,0.01,0.01,0.02", "--n-basis", "9", "--basis-var", "0.01",
                         "--angular-nodes", str(n), "--out", str(out)]) == 0
            rs.append(np.array(_json(out)["r"]))
        assert np.max(np.abs(rs[0] - rs[1])) <= 1e-7

    def test_bad_B_shape(self, tmp_path):
        B = _write_matrix(tmp_path / "B.json", np.eye(3))
        assert main(["attend", "--n-basis", "8", "--B", B]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["attend", "--B", str(tmp_path / "none.json")]) == 2

    def test_bad_theta(self):
        assert main(["attend", "--theta", "1,1"]) == 2  # theta_2 must be negative


class TestFit:
    def test_zero(self, tmp_path):
        H = _write_matrix(tmp_path / "H.json", np.zeros((3, 20)))
        out = tmp_path / "B.json"
        assert main(["fit", "--H", H, "--n-basis", "5", "--out", str(out)]) == 0
        res = _json(out)
        assert res["residual"] == 0.0
        assert np.array_equal(matrix_from_json(res["B"]), np.zeros((3, 5)))

    def test_constructed(self, tmp_path, rng):
        from contattn.value_fn import design_matrix, sequence_locations
        basis = att.RBFBasis.linear_1d(6, 0.1)
        H = rng.normal(size=(2, 6)) @ design_matrix(basis, sequence_locations(30))
        out = tmp_path / "B.json"
        assert main(["fit", "--H", _write_matrix(tmp_path / "H.json", H), "--n-basis", "6",
                     "--ridge", "0", "--out", str(out)]) == 0
        assert _json(out)["residual"] <= 1e-8

    def test_residual_nonincreasing(self, tmp_path, rng):
        H = _write_matrix(tmp_path / "H.json", rng.normal(size=(8, 40)))
        res = []
        for n in (4, 8, 16):
            out = tmp_path / f"B{n}.json"
            assert main(["fit", "--H", H, "--n-basis", str(n), "--out", str(out)]) == 0
            res.append(_json(out)["residual"])
        assert res[0] >= res[1] >= res[2]

    def test_malformed(self, tmp_path):
        p = tmp_path / "H.json"
        p.write_text("{not json")
        assert main(["fit", "--H", str(p)]) == 2
        p.write_text(json.dumps({"rows": 1, "cols": 2}))
        assert main(["fit", "--H", str(p)]) == 2

    def test_2d_needs_square(self, tmp_path):
        H = _write_matrix(tmp_path / "H.json", np.ones((2, 10)))
        assert main(["fit", "--dim", "2", "--n-basis", "4", "--H", H]) == 2


class TestDemo:
    @pytest.mark.parametrize("alpha", [1, 2])
    def test_runs(self, alpha, tmp_path, capsys):
        assert main(["demo", "--alpha", str(alpha), "--out-dir", str(tmp_path)]) == 0
        rep = _json(tmp_path / "demo_report.json")
        assert rep["gradient_check"]["passed"]
        assert abs(sum(rep["p_discrete"]) - 1) <= 1e-12
        dens = np.array(rep["density"])
        assert np.all(dens >= 0)
        if alpha == 1:
            assert np.all(dens > 0)
        elif np.sqrt(rep["sigma2"]) < 0.2:
            assert np.any(dens == 0)
        assert np.allclose(rep["context"], np.add(rep["c_discrete"], rep["c_continuous"]))
        assert "gradient check" in capsys.readouterr().out

    def test_sparse_zeros_when_narrow(self, tmp_path):
        # scan seeds until one gives a narrow moment-matched density
        for seed in range(42, 60):
            d = tmp_path / str(seed)
            assert main(["demo", "--alpha", "2", "--seed", str(seed), "--out-dir", str(d)]) == 0
            rep = _json(d / "demo_report.json")
            if np.sqrt(rep["sigma2"]) < 0.2:
                assert np.any(np.array(rep["density"]) == 0)
                return
        pytest.skip("no seed produced sigma < 0.2")

    def test_deterministic(self, tmp_path):
        for d in ("a", "b"):
            assert main(["demo", "--out-dir", str(tmp_path / d)]) == 0
        for name in ("demo_report.json", "attention_map.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CONTATTN_SEED", "43")
        assert main(["demo", "--out-dir", str(tmp_path / "env")]) == 0
        assert _json(tmp_path / "env" / "demo_report.json")["seed"] == 43
        assert main(["demo", "--seed", "44", "--out-dir", str(tmp_path / "flag")]) == 0
        assert _json(tmp_path / "flag" / "demo_report.json")["seed"] == 44
        monkeypatch.setenv("CONTATTN_SEED", "x")
        assert main(["demo", "--out-dir", str(tmp_path / "bad")]) == 2

    def test_csv_format(self, tmp_path):
        assert main(["demo", "--out-dir", str(tmp_path)]) == 0
        raw = (tmp_path / "attention_map.csv").read_bytes()
        assert raw.startswith(b"t,p_discrete,density\n")
        assert b"\r" not in raw and b";" not in raw


class TestCheck:
    def test_filter_json(self, capsys):
        assert main(["check", "--filter", "normalization", "--json"]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["passed"]
        assert [c["name"] for c in rep["checks"]] == ["normalization_mass"]
        assert "delta" in rep["checks"][0]

    def test_filter_table(self, capsys):
        assert main(["check", "--filter", "epanechnikov"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "1/1" in out

    def test_no_match(self):
        assert main(["check", "--filter", "no-such-check"]) == 2
