"""Command-line entry point: ``prism {gen,nid,mine,eval,compare,sweep}``.

Every command writes the fully resolved configuration next to its outputs
as ``<command>_config.json``; feeding that file back through ``--config``
reproduces the run.

Exit codes: 0 success (or an i.i.d. verdict from ``nid``), 10 non-i.i.d.
verdict, 2 usage or input error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import _jsonio
from .baselines import comparison_csv
from .dataset import Dataset, SplitSpec, load_jsonl, save_jsonl, split
from .errors import NumericError, PrismError
from .experiments import GenConfig, mean_by_method, run_comparison, run_sweep, sweep_csv, sweep_medians
from .nid import DEFAULT_K, DEFAULT_MIN_CLASS_COUNT, DEFAULT_THRESHOLD, NidReport, build_schedule, nid
from .oup import evaluate, load_pack, predict_dataset, predictions_csv, report_from_predictions, save_pack
from .plots import bar_chart, line_chart
from .tde import TdeConfig, mine, single_domain_pack, train_initial

EXIT_OK = 0
EXIT_NON_IID = 10
EXIT_INPUT = 2
EXIT_NUMERIC = 3

log = logging.getLogger("prism")


@dataclass
class NidSettings:
    k: int = DEFAULT_K
    threshold: float = DEFAULT_THRESHOLD
    min_class_count: int = DEFAULT_MIN_CLASS_COUNT


@dataclass
class RunConfig:
    """Everything a command needs; serialized verbatim next to the outputs."""

    command: str
    seed: int = 0
    tde: TdeConfig = field(default_factory=TdeConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    gen: GenConfig = field(default_factory=GenConfig)
    nid: NidSettings = field(default_factory=NidSettings)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    meta_key: str = "domain"
    sweep_param: str = "n"
    sweep_values: list[float] = field(default_factory=lambda: [2, 4, 8, 16])
    force_tde: bool = False
    plot: bool = True
    paths: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "seed": self.seed,
            "tde": self.tde.to_dict(),
            "split": {"ratios": list(self.split.ratios), "seed": self.split.seed},
            "gen": self.gen.to_dict(),
            "nid": vars(self.nid).copy(),
            "seeds": list(self.seeds),
            "meta_key": self.meta_key,
            "sweep_param": self.sweep_param,
            "sweep_values": list(self.sweep_values),
            "force_tde": self.force_tde,
            "plot": self.plot,
            "paths": dict(self.paths),
        }


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PrismError(f"{path}: not valid JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise PrismError(f"{path}: top level must be an object")
    return doc


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    doc = _load_config_file(args.config)
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    tde = {**doc.get("tde", {}), "seed": seed}
    for flag, key in (("epochs", "epochs"), ("alpha", "alpha"), ("n_domains", "n"), ("margin", "margin")):
        value = getattr(args, flag, None)
        if value is not None:
            tde[key] = value
    split_doc = doc.get("split", {})
    gen = {**doc.get("gen", {}), "seed": seed}
    for flag in ("domains", "per_cell"):
        value = getattr(args, flag, None)
        if value is not None:
            gen["n_domains" if flag == "domains" else flag] = value
    nid_doc = {**doc.get("nid", {})}
    if getattr(args, "k_clips", None) is not None:
        nid_doc["k"] = args.k_clips
    if getattr(args, "nid_threshold", None) is not None:
        nid_doc["threshold"] = args.nid_threshold
    cfg = RunConfig(
        command=args.command,
        seed=seed,
        tde=TdeConfig.from_dict(tde),
        split=SplitSpec(tuple(split_doc.get("ratios", SplitSpec().ratios)), seed),
        gen=GenConfig.from_dict(gen),
        nid=NidSettings(**nid_doc),
        seeds=list(doc.get("seeds", [0, 1, 2, 3, 4])),
        meta_key=doc.get("meta_key", "domain"),
        sweep_param=doc.get("sweep_param", "n"),
        sweep_values=list(doc.get("sweep_values", [2, 4, 8, 16])),
        force_tde=bool(doc.get("force_tde", False)),
        plot=bool(doc.get("plot", True)),
    )
    if getattr(args, "seeds", None) is not None:
        cfg.seeds = list(args.seeds)
    if getattr(args, "meta_key", None) is not None:
        cfg.meta_key = args.meta_key
    if getattr(args, "param", None) is not None:
        cfg.sweep_param = args.param
    if getattr(args, "values", None) is not None:
        cfg.sweep_values = list(args.values)
    if getattr(args, "force_tde", False):
        cfg.force_tde = True
    if args.plot is not None:
        cfg.plot = args.plot
    return cfg


def _out(cfg: RunConfig, out_dir: Path, name: str) -> Path:
    path = out_dir / name
    cfg.paths[name.split(".")[0]] = str(path)
    return path


def _write(path: Path, text: str) -> None:
    _jsonio.write_atomic(path, text)


def _split(cfg: RunConfig, data: Dataset):
    return split(data, cfg.split)


# --------------------------------------------------------------------------
# commands

def cmd_gen(cfg: RunConfig, args, out_dir: Path) -> int:
    data = cfg.gen.generate()
    path = _out(cfg, out_dir, "dataset.jsonl")
    save_jsonl(data, path)
    print(f"wrote {path}: N={len(data)} domains={cfg.gen.n_domains} classes={data.num_classes}")
    return EXIT_OK


def _nid_report(cfg: RunConfig, data: Dataset, encoder) -> NidReport:
    schedule = build_schedule(data, cfg.nid.k, cfg.seed)
    return nid(encoder, data, schedule, cfg.nid.threshold, cfg.nid.min_class_count)


def cmd_nid(cfg: RunConfig, args, out_dir: Path) -> int:
    data = load_jsonl(args.dataset)
    cfg.paths["dataset"] = str(args.dataset)
    if args.pack:
        encoder = load_pack(args.pack).encoder
        cfg.paths["pack"] = str(args.pack)
    else:
        train, val, _ = _split(cfg, data)
        encoder = train_initial(train, val, cfg.tde).encoder
    report = _nid_report(cfg, data, encoder)
    _write(_out(cfg, out_dir, "nid_report.json"), report.to_json() + "\n")
    verdict = "non-i.i.d." if report.is_non_iid else "i.i.d."
    print(f"NID={report.nid:.4f} threshold={report.threshold:g} verdict={verdict}")
    return EXIT_NON_IID if report.is_non_iid else EXIT_OK


def cmd_mine(cfg: RunConfig, args, out_dir: Path) -> int:
    data = load_jsonl(args.dataset)
    cfg.paths["dataset"] = str(args.dataset)
    train, val, test = _split(cfg, data)
    initial = train_initial(train, val, cfg.tde)
    report = _nid_report(cfg, data, initial.encoder)
    _write(_out(cfg, out_dir, "nid_report.json"), report.to_json() + "\n")
    run_tde = report.is_non_iid or cfg.force_tde
    if run_tde:
        pack, part, trace = mine(train, val, cfg.tde, initial=initial)
        _write(_out(cfg, out_dir, "loss_trace.csv"), trace.to_csv())
        _write(_out(cfg, out_dir, "partition.json"),
               _jsonio.dumps({"ids": part.ids, "assignment": part.assignment,
                              "domain_sizes": part.domain_sizes, "ari_vs_meta": part.ari_vs_meta,
                              "centroids": part.centroids}) + "\n")
        if cfg.plot and len(trace):
            epochs = trace.column("epoch")
            svg = line_chart({"L_tde": (epochs, trace.column("l_tde")),
                              "L_T": (epochs, trace.column("l_t"))},
                             "training objective per epoch", "epoch", "loss")
            _write(_out(cfg, out_dir, "loss_curve.svg"), svg)
    else:
        print(f"NID={report.nid:.4f} is within the threshold; keeping the single model "
              "(pass --force-tde to mine anyway)")
        pack = single_domain_pack(initial, train, cfg.tde)
        part = None
    save_pack(pack, _out(cfg, out_dir, "pack.json"))
    result = evaluate(pack, test)
    _write(_out(cfg, out_dir, "test_report.json"), json.dumps(result.to_dict(), indent=2) + "\n")
    ari = "" if part is None or part.ari_vs_meta is None else f" ARI={part.ari_vs_meta:.3f}"
    print(f"heads={pack.n} test macro-F1={result.macro_f1:.4f} accuracy={result.accuracy:.4f}{ari}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args, out_dir: Path) -> int:
    pack = load_pack(args.pack)
    data = load_jsonl(args.dataset)
    cfg.paths.update(pack=str(args.pack), dataset=str(args.dataset))
    records = predict_dataset(pack, data)
    report = report_from_predictions(records, data.num_classes)
    _write(_out(cfg, out_dir, "eval_report.json"), json.dumps(report.to_dict(), indent=2) + "\n")
    _write(_out(cfg, out_dir, "predictions.csv"), predictions_csv(records))
    print(f"N={report.n_samples} macro-F1={report.macro_f1:.4f} accuracy={report.accuracy:.4f}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args, out_dir: Path) -> int:
    data = load_jsonl(args.dataset)
    cfg.paths["dataset"] = str(args.dataset)
    rows = run_comparison(data, cfg.tde, cfg.seeds, cfg.split, cfg.meta_key)
    _write(_out(cfg, out_dir, "comparison.csv"), comparison_csv(rows))
    means = mean_by_method(rows)
    if cfg.plot:
        _write(_out(cfg, out_dir, "comparison.svg"),
               bar_chart(list(means), list(means.values()), "mean test macro-F1", "macro-F1"))
    for method, value in means.items():
        print(f"{method:6s} mean macro-F1={value:.4f}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args, out_dir: Path) -> int:
    data = load_jsonl(args.dataset)
    cfg.paths["dataset"] = str(args.dataset)
    rows = run_sweep(data, cfg.tde, cfg.sweep_param, cfg.sweep_values, cfg.seeds, cfg.split)
    _write(_out(cfg, out_dir, "sweep.csv"), sweep_csv(rows))
    med = sweep_medians(rows)
    if cfg.plot:
        _write(_out(cfg, out_dir, "sweep.svg"),
               line_chart({"median accuracy": (list(med), list(med.values()))},
                          f"accuracy vs {cfg.sweep_param}", cfg.sweep_param, "accuracy"))
    for value, acc in med.items():
        print(f"{cfg.sweep_param}={value:g} median accuracy={acc:.4f}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "nid": cmd_nid, "mine": cmd_mine, "eval": cmd_eval,
            "compare": cmd_compare, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with tde/split/gen/nid sections")
    common.add_argument("--seed", type=int, help="master seed for every random stream")
    common.add_argument("--out-dir", default=".", help="directory for outputs (default: .)")
    common.add_argument("--epochs", type=int)
    common.add_argument("--alpha", type=float, help="contrastive weight")
    common.add_argument("--n-domains", type=int, help="number of domains to estimate")
    common.add_argument("--margin", type=float)
    common.add_argument("--k-clips", type=int, help="NID rounds (2k clips)")
    common.add_argument("--nid-threshold", type=float)
    common.add_argument("--meta-key", help="metadata attribute for the semantic baseline")
    common.add_argument("--plot", dest="plot", action="store_true", default=None)
    common.add_argument("--no-plot", dest="plot", action="store_false")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="prism", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write a synthetic multi-domain dataset")
    p.add_argument("--domains", type=int, help="number of synthetic domains")
    p.add_argument("--per-cell", type=int, help="samples per (domain, class)")

    p = sub.add_parser("nid", parents=[common], help="audit a dataset for distribution shift")
    p.add_argument("dataset")
    p.add_argument("--pack", help="use this pack's encoder instead of training one")

    p = sub.add_parser("mine", parents=[common], help="estimate domains and train per-domain heads")
    p.add_argument("dataset")
    p.add_argument("--force-tde", action="store_true", help="mine even if NID says i.i.d.")

    p = sub.add_parser("eval", parents=[common], help="evaluate a pack on a dataset")
    p.add_argument("pack")
    p.add_argument("dataset")

    p = sub.add_parser("compare", parents=[common], help="all methods over several seeds")
    p.add_argument("dataset")
    p.add_argument("--seeds", type=int, nargs="*")

    p = sub.add_parser("sweep", parents=[common], help="accuracy as one hyper-parameter varies")
    p.add_argument("dataset")
    p.add_argument("--param", choices=("alpha", "n", "margin"))
    p.add_argument("--values", type=float, nargs="*")
    p.add_argument("--seeds", type=int, nargs="*")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](cfg, args, out_dir)
        _write(out_dir / f"{args.command}_config.json",
               json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        return code
    except NumericError as exc:
        print(f"prism: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PrismError, OSError, ValueError, TypeError, KeyError) as exc:
        print(f"prism: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
