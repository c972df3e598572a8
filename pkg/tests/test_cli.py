import csv
import io

import numpy as np
import pytest

from idwnet import cli
from idwnet import model as M
from idwnet.attention import NegDist, NegLogDist
from idwnet.core import Rng
from idwnet.gradcheck import analytic_grads, check


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert run_cli("train", "--set", "epochs=10", "--out", out) == 0
    return out


def test_gen_moons(tmp_path):
    assert run_cli("gen-moons", "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "train.csv")
    assert len(rows) == 100 and list(rows[0]) == ["x1", "x2", "label"]
    assert len(read_csv(tmp_path / "test.csv")) == 20


def test_gen_moons_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert run_cli("gen-moons", "--set", "seed=5", "--out", tmp_path / sub) == 0
    assert (tmp_path / "a/train.csv").read_bytes() == (tmp_path / "b/train.csv").read_bytes()


def test_train_outputs(trained, capsys):
    assert (trained / "model.idwm").exists()
    log = read_csv(trained / "trainlog.csv")
    assert len(log) == 10
    cfg = (trained / "config.ini").read_text()
    assert "epochs = 10" in cfg and "batch_size = 10" in cfg


def test_train_summary_line(tmp_path, capsys):
    assert run_cli("train", "--set", "epochs=2", "--out", tmp_path) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("train_acc=") and ", test_acc=" in line


def test_train_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert run_cli("train", "--set", "epochs=3", "--set", "seed=2", "--out", tmp_path / sub) == 0
    for name in ("trainlog.csv", "model.idwm", "config.ini"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_and_override(tmp_path):
    conf = tmp_path / "exp.ini"
    conf.write_text("[experiment]\nepochs = 2\nprototypes = 4\n")
    assert run_cli("train", "--config", conf, "--set", "prototypes=3", "--out", tmp_path / "o") == 0
    net = M.load(tmp_path / "o/model.idwm")
    assert net.n_prototypes == 3
    assert net.meta["epochs"] == 2


def test_unknown_config_key(tmp_path, capsys):
    conf = tmp_path / "exp.ini"
    conf.write_text("[experiment]\nepochs = 2\nlearning_rate = 0.1\n")
    assert run_cli("train", "--config", conf, "--out", tmp_path / "o") == cli.EXIT_CONFIG
    assert "learning_rate" in capsys.readouterr().err
    assert not (tmp_path / "o/model.idwm").exists()


def test_bad_values_are_config_errors(tmp_path):
    assert run_cli("train", "--set", "epochs=0", "--out", tmp_path) == cli.EXIT_CONFIG
    assert run_cli("train", "--set", "kind=cosine", "--out", tmp_path) == cli.EXIT_CONFIG
    assert run_cli("train", "--set", "noequals", "--out", tmp_path) == cli.EXIT_CONFIG


def test_missing_mnist_is_data_error(tmp_path):
    code = run_cli("train", "--set", "dataset=mnist", "--set", f"mnist_dir={tmp_path}",
                   "--out", tmp_path / "o")
    assert code == cli.EXIT_DATA


def test_corrupt_model_is_data_error(tmp_path):
    bad = tmp_path / "bad.idwm"
    bad.write_bytes(b"nope")
    assert run_cli("eval", "--model", bad) == cli.EXIT_DATA


def test_eval(trained, capsys):
    assert run_cli("eval", "--model", trained / "model.idwm", "--set", "epochs=10") == 0
    assert capsys.readouterr().out.startswith("train_acc=")


def test_sweep_matches_train(tmp_path, capsys):
    assert run_cli("train", "--set", "epochs=3", "--set", "seed=1", "--out", tmp_path / "t") == 0
    train_line = capsys.readouterr().out.strip().splitlines()[-1]
    assert run_cli("sweep", "--set", "epochs=3", "--set", "seed=1", "--p", "2", "--eps", "0.001",
                   "--out", tmp_path / "s") == 0
    rows = read_csv(tmp_path / "s/sweep.csv")
    assert len(rows) == 1 and rows[0]["status"] == "ok"
    assert f"train_acc={float(rows[0]['train_acc']):.4f}, test_acc={float(rows[0]['test_acc']):.4f}" == train_line


def test_sweep_cross_product_and_errors(tmp_path):
    assert run_cli("sweep", "--set", "epochs=1", "--p", "1,2", "--eps", "0.001,-1", "--seeds", "0,1",
                   "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 8
    bad = [r for r in rows if r["eps"] == "-1.0"]
    assert bad and all(r["status"].startswith("error") for r in bad)
    assert all(r["status"] == "ok" for r in rows if r["eps"] != "-1.0")


def test_sweep_deterministic(tmp_path):
    for sub in ("a", "b"):
        run_cli("sweep", "--set", "epochs=2", "--p", "1,2", "--eps", "0.001", "--out", tmp_path / sub)
    assert (tmp_path / "a/sweep.csv").read_bytes() == (tmp_path / "b/sweep.csv").read_bytes()


def test_sweep_needs_lists(tmp_path):
    assert run_cli("sweep", "--p", "", "--eps", "0.001") == cli.EXIT_CONFIG


# -- export-keys ---------------------------------------------------------------

def digit_net():
    rng = np.random.default_rng(0)
    keys = rng.uniform(size=(5, 784))
    keys[2] = 0.0
    values = np.zeros((5, 10))
    for i, c in enumerate([7, 1, 3, 1, 0]):
        values[i, c] = 1.0
    return M.PrototypeNet(keys, values, NegLogDist())


def test_export_keys_pgm(tmp_path):
    net = digit_net()
    M.save(net, tmp_path / "m.idwm")
    assert run_cli("export-keys", "--model", tmp_path / "m.idwm", "--out", tmp_path / "k") == 0
    index = read_csv(tmp_path / "k/keys_index.csv")
    assert [int(r["class"]) for r in index] == [0, 1, 1, 3, 7]
    assert [int(r["index"]) for r in index] == [4, 1, 3, 2, 0]
    for r in index:
        img = cli.read_pgm(tmp_path / "k" / r["file"])
        assert img.shape == (28, 28)
        key = net.keys[int(r["index"])]
        if key.max() == key.min():
            assert np.all(img == 128)
        else:
            norm = (key - key.min()) / (key.max() - key.min())
            assert np.abs(img.reshape(-1) / 255.0 - norm).max() <= 1 / 255


def test_export_keys_2d(trained):
    out = trained / "keys"
    assert run_cli("export-keys", "--model", trained / "model.idwm", "--out", out) == 0
    rows = read_csv(out / "keys.csv")
    assert len(rows) == 16
    assert [int(r["class"]) for r in rows] == sorted(int(r["class"]) for r in rows)


def test_export_keys_bad_dim(tmp_path):
    M.save(M.PrototypeNet(np.ones((2, 3)), np.eye(2), NegLogDist()), tmp_path / "m.idwm")
    assert run_cli("export-keys", "--model", tmp_path / "m.idwm", "--out", tmp_path) == cli.EXIT_CONFIG


# -- grid ----------------------------------------------------------------------

def test_grid_single_prototype(tmp_path):
    M.save(M.PrototypeNet([[0.3, 0.3]], [[0.1, 0.9]], NegLogDist()), tmp_path / "m.idwm")
    assert run_cli("grid", "--model", tmp_path / "m.idwm", "--res", 7, "--out", tmp_path / "g.csv") == 0
    rows = read_csv(tmp_path / "g.csv")
    assert len(rows) == 49
    assert {r["pred_class"] for r in rows} == {"1"} and {r["max_weight_proto"] for r in rows} == {"0"}
    xs = sorted({float(r["x1"]) for r in rows})
    assert xs[0] == -1.5 and xs[-1] == 2.5


def test_grid_cell_on_key(tmp_path):
    keys = [[0.0, 0.0], [1.0, 1.0], [2.0, -1.0]]
    values = [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]
    M.save(M.PrototypeNet(keys, values, NegLogDist(2, 1e-6)), tmp_path / "m.idwm")
    run_cli("grid", "--model", tmp_path / "m.idwm", "--box", "0,2,-1,1", "--res", 3,
            "--out", tmp_path / "g.csv")
    got = {(float(r["x1"]), float(r["x2"])): (int(r["pred_class"]), int(r["max_weight_proto"]))
           for r in read_csv(tmp_path / "g.csv")}
    assert got[(0.0, 0.0)] == (0, 0) and got[(1.0, 1.0)] == (1, 1) and got[(2.0, -1.0)] == (0, 2)


def test_grid_refinement_keeps_shared_points(trained, tmp_path):
    m = trained / "model.idwm"
    run_cli("grid", "--model", m, "--res", 51, "--out", tmp_path / "a.csv")
    run_cli("grid", "--model", m, "--res", 101, "--out", tmp_path / "b.csv")
    coarse = {(r["x1"], r["x2"]): r["pred_class"] for r in read_csv(tmp_path / "a.csv")}
    fine = {(r["x1"], r["x2"]): r["pred_class"] for r in read_csv(tmp_path / "b.csv")}
    shared = set(coarse) & set(fine)
    assert len(shared) >= 51 * 51 * 0.9
    assert all(coarse[k] == fine[k] for k in shared)


def test_grid_deterministic(trained, tmp_path):
    for name in ("a.csv", "b.csv"):
        run_cli("grid", "--model", trained / "model.idwm", "--res", 20, "--out", tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_grid_fc_and_errors(tmp_path):
    M.save(M.init_fc_relu(2, 4, 2, Rng(0)), tmp_path / "fc.idwm")
    run_cli("grid", "--model", tmp_path / "fc.idwm", "--res", 3, "--out", tmp_path / "g.csv")
    assert {r["max_weight_proto"] for r in read_csv(tmp_path / "g.csv")} == {"-1"}
    assert run_cli("grid", "--model", tmp_path / "fc.idwm", "--res", 1) == cli.EXIT_CONFIG
    M.save(M.init_fc_relu(3, 4, 2, Rng(0)), tmp_path / "fc3.idwm")
    assert run_cli("grid", "--model", tmp_path / "fc3.idwm") == cli.EXIT_CONFIG


# -- augment -------------------------------------------------------------------

def test_augment_empty(trained, tmp_path, capsys):
    cases = tmp_path / "cases.csv"
    cases.write_text("x1,x2,target\n")
    assert run_cli("augment", "--model", trained / "model.idwm", "--cases", cases,
                   "--set", "epochs=10", "--out", tmp_path / "o") == 0
    assert "applied 0 special case(s)" in capsys.readouterr().out
    assert read_csv(tmp_path / "o/augment_report.csv") == []
    assert (tmp_path / "o/model.idwm").read_bytes() == (trained / "model.idwm").read_bytes()


def test_augment_cases(trained, tmp_path):
    cases = tmp_path / "cases.csv"
    cases.write_text("x1,x2,target\n0.0,1.0,1\n1.0,-0.5,0\n")
    assert run_cli("augment", "--model", trained / "model.idwm", "--cases", cases,
                   "--set", "epochs=10", "--out", tmp_path / "o") == 0
    rows = read_csv(tmp_path / "o/augment_report.csv")
    assert [r["case"] for r in rows[:2]] == ["0", "1"]
    for r in rows:
        assert abs(float(r["train_acc_after"]) - float(r["train_acc_before"])) <= 0.01 + 1e-12
        assert abs(float(r["test_acc_after"]) - float(r["test_acc_before"])) <= 0.05 + 1e-12
    net = M.load(tmp_path / "o/model.idwm")
    assert list(M.predict(net, np.array([[0.0, 1.0], [1.0, -0.5]]))) == [1, 0]
    assert len(net.meta["augmentations"]) == len(rows)


def test_augment_noop(trained, tmp_path):
    net = M.load(trained / "model.idwm")
    pred = int(M.predict(net, np.array([[0.0, 1.0]]))[0])
    cases = tmp_path / "cases.csv"
    cases.write_text(f"0.0,1.0,{pred}\n")
    run_cli("augment", "--model", trained / "model.idwm", "--cases", cases, "--set", "epochs=10",
            "--out", tmp_path / "o")
    (row,) = read_csv(tmp_path / "o/augment_report.csv")
    assert row["noop"] == "1" and row["eta"] == ""


def test_augment_rejects_non_idw(tmp_path):
    M.save(M.PrototypeNet(np.ones((2, 2)), np.eye(2), NegDist()), tmp_path / "m.idwm")
    cases = tmp_path / "cases.csv"
    cases.write_text("0.0,0.0,1\n")
    assert run_cli("augment", "--model", tmp_path / "m.idwm", "--cases", cases,
                   "--out", tmp_path / "o") == cli.EXIT_CONFIG


def test_read_cases():
    reqs = cli.read_cases("a,b,c\n1,2,0\n\n3.5,-1,1\n")
    assert [(r.q, r.c) for r in reqs] == [((1.0, 2.0), 0), ((3.5, -1.0), 1)]
    with pytest.raises(cli.ConfigError):
        cli.read_cases("1,2,0\nx,y,z\n")


# -- gradcheck -----------------------------------------------------------------

def test_gradcheck_pass(capsys):
    assert run_cli("gradcheck", "--trials", 20, "--tol", "1e-4") == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "FAIL" not in out


def test_gradcheck_tol_zero():
    assert run_cli("gradcheck", "--kinds", "neglog", "--trials", 2, "--tol", 0) == cli.EXIT_GRADCHECK


def test_gradcheck_unknown_kind():
    assert run_cli("gradcheck", "--kinds", "cosine") == cli.EXIT_CONFIG


def test_gradcheck_corrupted_gradient_names_param():
    def broken(net, x, y):
        grads = analytic_grads(net, x, y)
        grads["values"] = grads["values"] * 1.01
        return grads
    r = check("neglog", trials=3, tol=1e-4, grads_fn=broken)
    assert not r.passed and r.worst_param == "values"
