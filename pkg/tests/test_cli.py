import json
import struct

import numpy as np
import pytest

from evoattack import cli
from evoattack.data import export_image


def write_idx(path, magic, dims, payload):
    path.write_bytes(struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims)
                     + bytes(payload))


def fake_mnist(root, n_train=64, n_test=16, seed=0):
    """Blocky digit-like images: class k lights the k-th band of rows."""
    rng = np.random.default_rng(seed)
    d = root / "mnist"
    d.mkdir(parents=True)
    for split, n in (("train", n_train), ("t10k", n_test)):
        labels = rng.integers(0, 10, n)
        imgs = (rng.random((n, 28, 28)) * 40).astype(np.uint8)
        for i, k in enumerate(labels):
            imgs[i, 2 * k + 4: 2 * k + 7, 4:24] = 255
        write_idx(d / f"{split}-images-idx3-ubyte", 0x803, (n, 28, 28), imgs.tobytes())
        write_idx(d / f"{split}-labels-idx1-ubyte", 0x801, (n,), labels.astype(np.uint8).tobytes())
    return root


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    fake_mnist(root / "data")
    weights = root / "w" / "lenet.json"
    code = cli.main(["train", "--data-dir", str(root / "data"), "--weights", str(weights),
                     "--epochs", "4", "--lr", "0.05", "--batch-size", "16", "--out", str(root / "t")])
    assert code == 0
    return root, weights


def base(workspace):
    root, weights = workspace
    return ["--data-dir", str(root / "data"), "--weights", str(weights)]


def test_csv_header_golden():
    assert cli.results_csv([]) == "ea,lambda,norm,l1,l2,linf,ssim,success_rate,mean_calls\n"


def test_csv_row_formatting():
    row = {"ea": "cmaes", "lambda": 25, "norm": "linf", "l1": 1.5, "l2": 0.25, "linf": 0.125,
           "ssim": float("nan"), "success_rate": 0.5, "mean_calls": 626.0}
    assert cli.results_csv([row]).splitlines()[1] == \
        "cmaes,25,linf,1.500000,0.250000,0.125000,nan,0.5000,626.0"


def test_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"lambda": 10, "bogus": 1}))
    with pytest.raises(cli.ConfigError, match="bogus"):
        cli.load_config(p)
    assert cli.main(["attack", "--config", str(p)]) == 2


def test_config_type_checked(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"lambda": "ten"}))
    with pytest.raises(cli.ConfigError, match="population_size"):
        cli.load_config(p)
    p.write_text(json.dumps({"beta": True}))
    with pytest.raises(cli.ConfigError):
        cli.load_config(p)


def test_flags_override_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"lambda": 10, "optimizer": "ga", "seed": 3}))
    cfg = cli.load_config(p, {"seed": 5, "population_size": None})
    assert (cfg.population_size, cfg.optimizer, cfg.seed) == (10, "ga", 5)


def test_missing_dataset_names_path(tmp_path, capsys):
    code = cli.main(["train", "--data-dir", str(tmp_path / "nowhere"), "--weights",
                     str(tmp_path / "w.json")])
    assert code == 2
    assert "nowhere/mnist/train-images-idx3-ubyte" in capsys.readouterr().err


def test_missing_weights_exit_2(tmp_path):
    assert cli.main(["attack", "--weights", str(tmp_path / "none.json")]) == 2


def test_train_zero_epochs_saves_initialization(tmp_path):
    fake_mnist(tmp_path / "data", n_train=8, n_test=4)
    from evoattack.data import load_weights
    from evoattack.nn import build_network, lenet_spec
    w = tmp_path / "init.json"
    assert cli.main(["train", "--data-dir", str(tmp_path / "data"), "--weights", str(w),
                     "--epochs", "0", "--seed", "2", "--out", str(tmp_path)]) == 0
    saved = load_weights(w)
    ref = build_network(lenet_spec(), seed=2)
    assert all(saved[k].tobytes() == ref[k].tobytes() for k in ref)


def test_attack_outputs_and_determinism(workspace, tmp_path):
    args = ["attack"] + base(workspace) + ["--image-index", "1", "--lambda", "10",
                                           "--max-generations", "150"]
    codes = [cli.main(args + ["--out", str(tmp_path / d)]) for d in "ab"]
    assert codes[0] == codes[1] and codes[0] in (0, 4)
    for name in ("attack_1.json", "clean_1.pgm", "adversarial_1.pgm"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "attack_1.json").read_text())
    assert report["verified"] == report["success"]
    assert report["oracle_calls"] == 10 * report["generations"] + 1


def test_attack_invalid_target_exit_3(workspace, tmp_path, capsys):
    from evoattack.data import load_dataset, load_weights
    from evoattack.nn import lenet_spec, predict
    root, weights = workspace
    img = load_dataset("mnist", "test", root / "data").images[0]
    cls = int(predict(lenet_spec(), load_weights(weights), img[None])[0])
    code = cli.main(["attack"] + base(workspace) + ["--image-index", "0", "--target", str(cls),
                                                    "--out", str(tmp_path)])
    assert code == 3
    code = cli.main(["attack"] + base(workspace) + ["--target", "10", "--out", str(tmp_path)])
    assert code == 3


def test_attack_budget_exhausted_exit_4(workspace, tmp_path):
    code = cli.main(["attack"] + base(workspace) + ["--lambda", "2", "--max-generations", "1",
                                                    "--sigma0", "1e-9", "--out", str(tmp_path)])
    assert code == 4


def test_compare_deterministic_csv(workspace, tmp_path, capsys):
    args = ["compare"] + base(workspace) + ["--n-images", "3", "--ea", "cmaes", "openai",
                                            "--lambda", "8", "--norm", "none", "linf",
                                            "--max-generations", "40", "--seed", "1"]
    for d in "ab":
        assert cli.main(args + ["--out", str(tmp_path / d)]) in (0, 4)
    a = (tmp_path / "a" / "results.csv").read_text()
    assert a == (tmp_path / "b" / "results.csv").read_text()
    lines = a.splitlines()
    assert lines[0] == ",".join(cli.CSV_COLUMNS)
    assert [ln.split(",")[:3] for ln in lines[1:]] == [
        ["cmaes", "8", "none"], ["cmaes", "8", "linf"], ["openai", "8", "none"], ["openai", "8", "linf"]]
    assert "EA" in capsys.readouterr().out


def test_eval_metrics(tmp_path, capsys):
    rng = np.random.default_rng(0)
    a = rng.random((10, 10, 1))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    pa, pb = export_image(a, tmp_path / "a.pgm"), export_image(b, tmp_path / "b.pgm")
    assert cli.main(["eval-metrics", "--original", str(pa), "--perturbed", str(pb)]) == 0
    windowed = json.loads(capsys.readouterr().out)
    assert set(windowed) == {"l1", "l2", "linf", "ssim", "ssim_global"}
    assert cli.main(["eval-metrics", "--original", str(pa), "--perturbed", str(pb),
                     "--ssim-global"]) == 0
    glob = json.loads(capsys.readouterr().out)
    assert glob["ssim"] == windowed["ssim_global"]
    assert cli.main(["eval-metrics", "--original", str(pa), "--perturbed", str(pa)]) == 0
    same = json.loads(capsys.readouterr().out)
    assert same["ssim"] == 1.0 and same["l2"] == 0.0


def test_eval_metrics_missing_file(tmp_path):
    assert cli.main(["eval-metrics", "--original", str(tmp_path / "x.pgm"),
                     "--perturbed", str(tmp_path / "y.pgm")]) == 2
