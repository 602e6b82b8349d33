"""Command-line entry point: train, attack, compare, eval-metrics.

Exit codes: 0 success, 2 I/O or configuration error, 3 invalid attack
request, 4 every attacked image exhausted its generation budget.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import data, evo
from .attack import AttackConfig, ClassifierOracle, InvalidTarget, NORM_KINDS, evolution_attack, verify
from .metrics import similarity_report
from .nn import ARCHITECTURES, accuracy, build_network, check_weights, predict, train_sgd

log = logging.getLogger("evoattack")

EXIT_OK, EXIT_IO, EXIT_INVALID_ATTACK, EXIT_EXHAUSTED = 0, 2, 3, 4
CSV_COLUMNS = ["ea", "lambda", "norm", "l1", "l2", "linf", "ssim", "success_rate", "mean_calls"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs"
    data_dir: str | None = None
    dataset: str = "mnist"
    network: str = "lenet"
    weights: str = "weights/lenet.json"
    # train
    epochs: int = 3
    lr: float = 0.05
    batch_size: int = 64
    train_limit: int | None = None
    init: str = "he_uniform"
    # attack
    image_index: int = 0
    target: int | None = None
    optimizer: str = "cmaes"
    # "lambda" in JSON and on the command line
    population_size: int = 25
    mu: int | None = None
    sigma0: float = 0.05
    sigma_mode: str = "fixed"
    beta: float = 1.0
    norm: str = "none"
    max_generations: int = 500
    # compare
    eas: list = field(default_factory=lambda: ["cmaes", "ga"])
    lambdas: list = field(default_factory=lambda: [25])
    norms: list = field(default_factory=lambda: ["none"])
    n_images: int = 50
    # eval-metrics
    original: str | None = None
    perturbed: str | None = None
    ssim_global: bool = False

    def validate(self) -> "RunConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.dataset in ("mnist", "cifar10"), f"unknown dataset {self.dataset!r}")
        need(self.network in ARCHITECTURES, f"unknown network {self.network!r}")
        need(self.optimizer in evo.OPTIMIZER_KINDS, f"unknown optimizer {self.optimizer!r}")
        need(all(e in evo.OPTIMIZER_KINDS for e in self.eas), f"unknown optimizer in {self.eas}")
        need(self.norm in NORM_KINDS, f"unknown norm {self.norm!r}")
        need(all(n in NORM_KINDS for n in self.norms), f"unknown norm in {self.norms}")
        need(self.sigma_mode in ("fixed", "cumulative"), f"unknown sigma_mode {self.sigma_mode!r}")
        need(self.population_size >= 2 and all(int(l) >= 2 for l in self.lambdas),
             "lambda must be at least 2")
        need(self.mu is None or self.mu >= 1, "mu must be positive")
        need(self.max_generations >= 1, "max_generations must be at least 1")
        need(self.n_images >= 1, "n_images must be at least 1")
        need(self.epochs >= 0 and self.lr > 0 and self.batch_size >= 1, "invalid training settings")
        need(self.beta >= 0 and self.sigma0 > 0, "beta must be >= 0 and sigma0 > 0")
        need(self.train_limit is None or self.train_limit >= 1, "train_limit must be positive")
        return self


JSON_KEYS = {f.name: f.name for f in fields(RunConfig)}
JSON_KEYS["lambda"] = "population_size"
del JSON_KEYS["population_size"]

_TYPES = {int: (int,), float: (int, float), str: (str,), bool: (bool,), list: (list,)}


def _check_type(name, value):
    f = {f.name: f for f in fields(RunConfig)}[name]
    annot = str(f.type)
    if value is None:
        if "None" not in annot:
            raise ConfigError(f"{name} may not be null")
        return
    base = annot.split("|")[0].strip()
    expected = {"int": int, "float": float, "str": str, "bool": bool, "list": list}[base]
    if isinstance(value, bool) and expected is not bool:
        raise ConfigError(f"{name} must be {base}, got a boolean")
    if not isinstance(value, _TYPES[expected]):
        raise ConfigError(f"{name} must be {base}, got {type(value).__name__}")


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """JSON document (unknown keys rejected) with command-line overrides on top."""
    values = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        unknown = sorted(set(doc) - set(JSON_KEYS))
        if unknown:
            raise ConfigError(f"{path}: unknown keys {unknown}")
        for key, value in doc.items():
            name = JSON_KEYS[key]
            _check_type(name, value)
            values[name] = value
    for name, value in (overrides or {}).items():
        if value is not None:
            values[name] = value
    return RunConfig(**values).validate()


# --- helpers --------------------------------------------------------------

def _root(cfg):
    return Path(cfg.data_dir) if cfg.data_dir else data.data_root()


def _load_model(cfg):
    spec = ARCHITECTURES[cfg.network]()
    path = Path(cfg.weights)
    if not path.with_suffix(".json").exists():
        raise FileNotFoundError(f"missing weight manifest {path.with_suffix('.json')}")
    weights = data.load_weights(path)
    check_weights(spec, weights)
    return spec, weights


def _seed_rng(seed: int, *key: int):
    return evo.make_rng(np.random.SeedSequence(seed, spawn_key=key))


def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def correctly_classified(spec, weights, dataset, n: int, chunk: int = 500) -> list:
    """First ``n`` indices, in dataset order, whose prediction matches the label."""
    picked = []
    for start in range(0, len(dataset), chunk):
        pred = predict(spec, weights, dataset.images[start:start + chunk])
        hits = np.flatnonzero(pred == dataset.labels[start:start + chunk]) + start
        picked.extend(int(i) for i in hits[: n - len(picked)])
        if len(picked) >= n:
            break
    return picked


def _attack_config(cfg, optimizer=None, lam=None, norm=None):
    return AttackConfig(optimizer=optimizer or cfg.optimizer,
                        population_size=int(lam or cfg.population_size), elite_count=cfg.mu,
                        sigma0=cfg.sigma0, sigma_mode=cfg.sigma_mode, beta=cfg.beta,
                        norm=norm or cfg.norm, max_generations=cfg.max_generations, seed=cfg.seed)


# --- commands -------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> int:
    spec = ARCHITECTURES[cfg.network]()
    train = data.load_dataset(cfg.dataset, "train", _root(cfg))
    test = data.load_dataset(cfg.dataset, "test", _root(cfg))
    if cfg.train_limit:
        train = train.subset(cfg.train_limit)
    weights = build_network(spec, init=cfg.init, seed=cfg.seed)
    weights, history = train_sgd(spec, weights, train.images, train.labels, epochs=cfg.epochs,
                                 lr=cfg.lr, batch_size=cfg.batch_size, seed=cfg.seed)
    manifest = data.save_weights(weights, cfg.weights, network=cfg.network)
    acc = accuracy(spec, weights, test.images, test.labels)
    _dump({"network": cfg.network, "dataset": cfg.dataset, "train_size": len(train),
           "epochs": cfg.epochs, "history": history, "test_accuracy": acc},
          Path(cfg.out) / "train_report.json")
    print(f"weights: {manifest}")
    print(f"test accuracy: {acc:.4f}")
    return EXIT_OK


def cmd_attack(cfg: RunConfig) -> int:
    spec, weights = _load_model(cfg)
    test = data.load_dataset(cfg.dataset, "test", _root(cfg))
    if not 0 <= cfg.image_index < len(test):
        raise ConfigError(f"image_index {cfg.image_index} outside test set of {len(test)}")
    image = test.images[cfg.image_index].astype(float)
    oracle = ClassifierOracle.from_network(spec, weights)
    acfg = _attack_config(cfg)
    result = evolution_attack(oracle, image, cfg.target, acfg, rng=_seed_rng(cfg.seed, cfg.image_index))
    verified = verify(ClassifierOracle.from_network(spec, weights), result)
    out = Path(cfg.out)
    data.export_image(image, out / f"clean_{cfg.image_index}.{_ext(image)}")
    data.export_image(result.adversarial_example, out / f"adversarial_{cfg.image_index}.{_ext(image)}")
    report = {"image_index": cfg.image_index, "label": int(test.labels[cfg.image_index]),
              "config": asdict(acfg), **result.report(), "verified": verified}
    _dump(report, out / f"attack_{cfg.image_index}.json")
    s = result.similarity
    print(f"image {cfg.image_index}: class {result.original_class} -> target {result.target} "
          f"{'success' if result.success else 'FAILED'} after {result.generations} generations "
          f"({result.oracle_calls} queries); L2 {s.l2:.4f} Linf {s.linf:.4f} SSIM {s.ssim:.4f}")
    return EXIT_OK if result.success else EXIT_EXHAUSTED


def _ext(image):
    return "pgm" if image.shape[-1] == 1 else "ppm"


def _fmt(x):
    return "nan" if x is None or not np.isfinite(x) else f"{x:.6f}"


def run_comparison(cfg: RunConfig, spec, weights, dataset, indices):
    """Attack every image under every (ea, lambda, norm) row."""
    rows, details = [], []
    for ea in cfg.eas:
        for lam in cfg.lambdas:
            for nk in cfg.norms:
                acfg = _attack_config(cfg, ea, lam, nk)
                per_image = []
                for i in indices:
                    oracle = ClassifierOracle.from_network(spec, weights)
                    r = evolution_attack(oracle, dataset.images[i].astype(float), cfg.target, acfg,
                                         rng=_seed_rng(cfg.seed, i))
                    per_image.append({"index": i, "success": r.success,
                                      "generations": r.generations, "oracle_calls": r.oracle_calls,
                                      **r.similarity.as_dict()})
                ok = [p for p in per_image if p["success"]]
                mean = (lambda k: float(np.mean([p[k] for p in ok])) if ok else float("nan"))
                rows.append({"ea": ea, "lambda": int(lam), "norm": nk, "l1": mean("l1"),
                             "l2": mean("l2"), "linf": mean("linf"), "ssim": mean("ssim"),
                             "success_rate": len(ok) / len(per_image),
                             "mean_calls": float(np.mean([p["oracle_calls"] for p in per_image]))})
                details.append({"ea": ea, "lambda": int(lam), "norm": nk, "images": per_image})
    return rows, details


def results_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r["ea"], r["lambda"], r["norm"], _fmt(r["l1"]), _fmt(r["l2"]), _fmt(r["linf"]),
                    _fmt(r["ssim"]), f"{r['success_rate']:.4f}", f"{r['mean_calls']:.1f}"])
    return buf.getvalue()


def pretty_table(rows) -> str:
    head = f"{'EA':<8}{'lambda':>7} {'norm':<6}{'L1':>10}{'L2':>9}{'Linf':>9}{'SSIM':>9}{'succ':>7}{'calls':>9}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['ea']:<8}{r['lambda']:>7} {r['norm']:<6}{r['l1']:>10.4f}{r['l2']:>9.4f}"
                     f"{r['linf']:>9.4f}{r['ssim']:>9.4f}{r['success_rate']:>7.2f}{r['mean_calls']:>9.1f}")
    return "\n".join(lines)


def cmd_compare(cfg: RunConfig) -> int:
    spec, weights = _load_model(cfg)
    test = data.load_dataset(cfg.dataset, "test", _root(cfg))
    indices = correctly_classified(spec, weights, test, cfg.n_images)
    if not indices:
        raise ConfigError("no correctly classified test images to attack")
    rows, details = run_comparison(cfg, spec, weights, test, indices)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(rows))
    _dump({"images": indices, "rows": details}, out / "compare.json")
    print(pretty_table(rows))
    print(f"csv: {out / 'results.csv'}")
    if all(r["success_rate"] == 0 for r in rows):
        return EXIT_EXHAUSTED
    return EXIT_OK


def cmd_eval_metrics(cfg: RunConfig) -> int:
    if not cfg.original or not cfg.perturbed:
        raise ConfigError("eval-metrics needs --original and --perturbed image paths")
    for p in (cfg.original, cfg.perturbed):
        if not Path(p).exists():
            raise FileNotFoundError(f"missing image {p}")
    a, b = data.read_pnm(cfg.original), data.read_pnm(cfg.perturbed)
    if a.shape != b.shape:
        raise ConfigError(f"image shapes differ: {a.shape} vs {b.shape}")
    report = similarity_report(a, b).as_dict()
    if cfg.ssim_global:
        report["ssim"] = report["ssim_global"]
    print(json.dumps(report, indent=2))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "attack": cmd_attack, "compare": cmd_compare,
            "eval-metrics": cmd_eval_metrics}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--data-dir", dest="data_dir",
                        help="dataset root (default: $EVOATTACK_DATA_DIR or ./data)")
    common.add_argument("--dataset", choices=["mnist", "cifar10"])
    common.add_argument("--network", choices=sorted(ARCHITECTURES))
    common.add_argument("--weights", help="weight manifest path")
    common.add_argument("--max-generations", dest="max_generations", type=int)
    common.add_argument("--beta", type=float)
    common.add_argument("--sigma0", type=float)
    common.add_argument("--sigma-mode", dest="sigma_mode", choices=["fixed", "cumulative"])
    common.add_argument("--mu", type=int)
    common.add_argument("--target", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="evoattack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train the target classifier")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--train-limit", dest="train_limit", type=int,
                   help="use only the first N training images")

    p = sub.add_parser("attack", parents=[common], help="attack one test image")
    p.add_argument("--image-index", dest="image_index", type=int)
    p.add_argument("--ea", dest="optimizer", choices=evo.OPTIMIZER_KINDS)
    p.add_argument("--lambda", dest="population_size", type=int)
    p.add_argument("--norm", choices=NORM_KINDS)

    p = sub.add_parser("compare", parents=[common], help="batch comparison table")
    p.add_argument("--ea", dest="eas", nargs="+", choices=evo.OPTIMIZER_KINDS)
    p.add_argument("--lambda", dest="lambdas", nargs="+", type=int)
    p.add_argument("--norm", dest="norms", nargs="+", choices=NORM_KINDS)
    p.add_argument("--n-images", dest="n_images", type=int)

    p = sub.add_parser("eval-metrics", parents=[common], help="L1/L2/Linf/SSIM of two images")
    p.add_argument("--original")
    p.add_argument("--perturbed")
    p.add_argument("--ssim-global", dest="ssim_global", action="store_true", default=None,
                   help="report the single-window SSIM as the primary score")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "verbose")}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except InvalidTarget as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_ATTACK
    except (ConfigError, OSError, data.DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
