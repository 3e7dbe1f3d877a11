"""Command-line entry point: ``lenkit {train,explain,evaluate,benchmark}``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric error.
Failures print one JSON object on a single stderr line, e.g.
``{"error": "config", "exit_code": 1, "message": "unknown criterion 'foo'"}``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, logic, metrics
from .benchmark import run_benchmark, write_reports
from .config import RunConfig, fit_model
from .data import ConceptDataset, load_csv
from .errors import ConfigError, DataError, LenError, NumericError
from .extraction import CONFLICT_POLICIES, ExplanationOptions
from .models import KINDS, LogicExplainedNetwork

log = logging.getLogger("lenkit")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}
EVAL_COLUMNS = ("class", "metric", "value")
_ERROR_KIND = {ConfigError: "config", DataError: "data", NumericError: "numeric"}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors, which would read as a data error."""

    def error(self, message):
        raise ConfigError(message)


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", metavar="PATH", default=S, help="run configuration JSON")
    p.add_argument("--out", metavar="DIR", default=S, help="output directory (default: lenkit-out)")
    p.add_argument("--seed", metavar="INT", type=int, default=S, help="override the config seed")
    p.add_argument("--threads", metavar="INT", type=int, default=S,
                   help="worker threads for benchmark folds (default: 1)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="lenkit", description="Logic Explained Networks", parents=[common])
    parser.add_argument("--version", action="version", version=f"lenkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="train a LEN from a config")
    p.add_argument("--model", choices=KINDS, help="override the config's model preset")

    p = sub.add_parser("explain", parents=[common], help="extract class explanations")
    p.add_argument("--model-file", metavar="PATH", help="trained model (default: OUT/model.json)")
    p.add_argument("--data", metavar="CSV", help="samples to explain (default: config dataset)")
    p.add_argument("--class", dest="class_", metavar="INDEX|NAME", action="append",
                   help="class to explain; repeatable (default: all)")
    p.add_argument("--style", choices=logic.STYLES, help="rule rendering style")
    p.add_argument("--min-support", type=int, help="drop minterms seen fewer times")
    p.add_argument("--top-k", type=int, help="keep only the k most frequent minterms")
    p.add_argument("--conflict-policy", choices=CONFLICT_POLICIES)
    p.add_argument("--no-simplify", action="store_true", help="skip Boolean minimization")

    p = sub.add_parser("evaluate", parents=[common], help="score explanations on data")
    p.add_argument("--model-file", metavar="PATH", help="trained model (default: OUT/model.json)")
    p.add_argument("--formulas", metavar="PATH", required=True,
                   help="explanations.json, a text file with one DNF per line, or a directory")
    p.add_argument("--data", metavar="CSV", help="evaluation samples (default: config dataset)")

    p = sub.add_parser("benchmark", parents=[common], help="k-fold train/extract/evaluate")
    p.add_argument("--model", choices=KINDS, help="override the config's model preset")
    p.add_argument("--folds", type=int, help="override the config's fold count")
    return parser


# helpers -------------------------------------------------------------------


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    def emit(self, record):
        self.stream = sys.stderr
        super().emit(record)


def _configure_logging() -> None:
    name = os.environ.get("LENKIT_LOG", "warn").strip().lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"LENKIT_LOG must be one of {', '.join(LOG_LEVELS)}, got {name!r}")
    handler = _StderrHandler()
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.captureWarnings(True)
    for logger in (log, logging.getLogger("py.warnings")):
        logger.handlers[:] = [h for h in logger.handlers if not isinstance(h, _StderrHandler)]
        logger.addHandler(handler)
        logger.setLevel(LOG_LEVELS[name])
        logger.propagate = False


def _load_config(args, required: bool = True) -> RunConfig | None:
    path = getattr(args, "config", None)
    if path is None:
        if required:
            raise ConfigError(f"{args.command} needs --config PATH")
        return None
    cfg = RunConfig.load(path)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "model", None):
        cfg.model = args.model
        cfg.pruning.pop("strategy", None)
        cfg.__post_init__()
    if getattr(args, "folds", None) is not None:
        cfg.folds = args.folds
    return cfg


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", "lenkit-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path, what: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{what} not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} is not valid JSON: {exc.msg} at line {exc.lineno}") from None


def _load_model(args) -> tuple[LogicExplainedNetwork, dict]:
    path = Path(args.model_file) if args.model_file else _out_dir(args) / "model.json"
    doc = _read_json(path, "model file")
    try:
        model = LogicExplainedNetwork.from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed model file {path}: {exc}") from None
    return model, doc


def _load_data(args, cfg: RunConfig | None, model: LogicExplainedNetwork, doc: dict) -> ConceptDataset:
    if args.data:
        dataset = load_csv(args.data)
    elif cfg is not None:
        dataset = cfg.load_dataset()
    else:
        raise ConfigError(f"{args.command} needs --data CSV or --config PATH")
    if dataset.k != model.preset.k:
        raise DataError(f"model expects {model.preset.k} concepts, data has {dataset.k}")
    names = doc.get("concept_names")
    if names and list(dataset.concept_names) != list(names):
        raise DataError("data concept columns differ from the ones the model was trained on")
    return dataset


def _class_names(doc: dict, model: LogicExplainedNetwork) -> list[str]:
    names = doc.get("class_names")
    return list(names) if names else [f"class{i + 1}" for i in range(model.preset.r)]


def _resolve_classes(requested, names: list[str]) -> list[int]:
    if not requested:
        return list(range(len(names)))
    out = []
    for item in requested:
        if item in names:
            out.append(names.index(item))
            continue
        try:
            idx = int(item)
        except ValueError:
            raise ConfigError(f"unknown class {item!r}; expected one of {', '.join(names)}") from None
        if not 0 <= idx < len(names):
            raise ConfigError(f"class index {idx} out of range [0, {len(names) - 1}]")
        out.append(idx)
    return out


# commands ------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_config(args)
    dataset = cfg.load_dataset()
    model = fit_model(cfg, dataset)
    out = _out_dir(args)
    doc = model.to_dict()
    doc["concept_names"] = list(dataset.concept_names)
    doc["class_names"] = cfg.class_names(dataset)
    doc["run_config"] = cfg.to_dict()
    _write_json(out / "model.json", doc)
    _write_json(out / "history.json", {
        "histories": [h.to_dict() for h in model.histories],
        "pruning": model.pruning_info,
    })
    _write_json(out / "config.json", {"run": cfg.to_dict(), "preset": model.preset.to_dict()})
    final = [h.loss[-1] for h in model.histories]
    log.info("trained %s on %s: final loss %s", cfg.model, cfg.dataset_name, final)
    print(f"model: {out / 'model.json'}")
    return 0


def cmd_explain(args) -> int:
    cfg = _load_config(args, required=False)
    model, doc = _load_model(args)
    dataset = _load_data(args, cfg, model, doc)
    names = _class_names(doc, model)
    classes = _resolve_classes(args.class_, names)
    opts = model.preset.extraction.to_dict()
    for key, value in (("min_support", args.min_support), ("top_k_minterms", args.top_k),
                       ("conflict_policy", args.conflict_policy)):
        if value is not None:
            opts[key] = value
    if args.no_simplify:
        opts["simplify"] = False
    options = ExplanationOptions(**opts)
    run = doc.get("run_config") or {}
    style = args.style or (RunConfig.from_dict(run).resolved_style if run else "fol_iff")
    records = []
    for i in classes:
        exp = model.explain(i, dataset, options=options)
        records.append(exp.record(names[i], style))
    out = _out_dir(args)
    _write_json(out / "explanations.json", {"format_version": 1, "explanations": records})
    text = "".join(r["rule_text"] + "\n" for r in records)
    (out / "explanations.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _read_formulas(path: Path, vocabulary, names: list[str]) -> dict[int, logic.DnfFormula]:
    if path.is_dir():
        path = path / "explanations.json"
    if not path.exists():
        raise ConfigError(f"formula file not found: {path}")
    found: dict[int, str] = {}
    if path.suffix == ".json":
        doc = _read_json(path, "formula file")
        items = doc.get("explanations", []) if isinstance(doc, dict) else doc
        for rec in items:
            cls = rec.get("class_index")
            if cls is None:
                cls = _resolve_classes([str(rec.get("class"))], names)[0]
            found[int(cls)] = rec["formula_text"]
    else:
        lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
        for i, line in enumerate(ln for ln in lines if ln and not ln.startswith("#")):
            found[i] = line
    if not found:
        raise ConfigError(f"formula file {path} contains no formulas")
    bad = [i for i in found if not 0 <= i < len(names)]
    if bad:
        raise ConfigError(f"formula for class {bad[0]} but the model has {len(names)} outputs")
    return {i: logic.parse_formula(t, vocabulary, kind="dnf") for i, t in sorted(found.items())}


def cmd_evaluate(args) -> int:
    cfg = _load_config(args, required=False)
    model, doc = _load_model(args)
    dataset = _load_data(args, cfg, model, doc)
    names = _class_names(doc, model)
    formulas = _read_formulas(Path(args.formulas), dataset.concept_names, names)
    threshold = model.preset.extraction.boolean_threshold
    supervised = not model.preset.criterion_obj.on_logits and dataset.q == model.preset.r
    rows, report = [], {}
    for i, phi in formulas.items():
        m = {"complexity": metrics.complexity(phi),
             "fidelity": metrics.fidelity(phi, model, dataset, i, threshold)}
        if supervised:
            m["explanation_accuracy"] = metrics.explanation_accuracy(
                phi, dataset, dataset.Y[:, i], threshold)
            m["model_accuracy"] = metrics.model_accuracy(
                model.predict_bool(dataset.X)[:, i], dataset.Y[:, i])
        report[names[i]] = m
        rows.extend({"class": names[i], "metric": k, "value": repr(float(v))}
                    for k, v in sorted(m.items()))
    out = _out_dir(args)
    _write_json(out / "metrics.json", {"format_version": 1, "n": dataset.n, "classes": report})
    with (out / "metrics.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=EVAL_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for name, m in report.items():
        print(name + ": " + ", ".join(f"{k}={v:.2f}" for k, v in sorted(m.items())))
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_config(args)
    threads = getattr(args, "threads", 1)
    if threads < 1:
        raise ConfigError("--threads must be at least 1")
    report = run_benchmark(cfg, threads=threads)
    out = _out_dir(args)
    _write_json(out / "report.json", report)
    paths = write_reports(report, out)
    for m, v in report["aggregate"].items():
        print(f"{m}: {v['mean']:.4f} ± {v['std']:.4f}")
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return 0


COMMANDS = {"train": cmd_train, "explain": cmd_explain, "evaluate": cmd_evaluate,
            "benchmark": cmd_benchmark}


def _diagnostic(exc: LenError) -> str:
    kind = next((v for k, v in _ERROR_KIND.items() if isinstance(exc, k)), "config")
    doc = {"error": kind, "exit_code": exc.exit_code, "message": " ".join(str(exc).split())}
    for attr in ("fold", "epoch", "layer", "position"):
        if getattr(exc, attr, None) is not None:
            doc[attr] = getattr(exc, attr)
    return json.dumps(doc)


def main(argv=None) -> int:
    try:
        _configure_logging()
        args = build_parser().parse_args(argv)
        if getattr(args, "seed", 0) < 0:
            raise ConfigError("--seed must be non-negative")
        return COMMANDS[args.command](args)
    except LenError as exc:
        print(_diagnostic(exc), file=sys.stderr)
        return exc.exit_code
    finally:
        logging.captureWarnings(False)


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
