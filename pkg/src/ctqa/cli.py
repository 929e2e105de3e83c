"""Command-line entry point.

Commands: reconstruct, inspect, ask, eval, record.

Settings resolve as flags > environment (``CTQA_<NAME>``) > JSON config file
(``--config``) > defaults. The endpoint credential is read from the
environment only (``CTQA_API_KEY``).

Exit codes: 0 success, 2 input error, 3 backend error.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import dataclasses
import json
import logging
import os
import sys
import threading
from dataclasses import dataclass, fields
from pathlib import Path

from . import __version__
from .errors import CtqaError, GatewayError, IntegrityError, SchemaError
from .evaluation import error_sample, evaluate
from .gateway import Gateway, LiveBackend, MockBackend, ReplayBackend
from .ingest import Dataset, load_aitqa, load_dataset, load_hitab
from .ingest.canonical import table_from_document
from .orchestrator import Mode, Pipeline, PipelineConfig, Prediction
from .prompts import TokenBudget
from .reconstruct import reconstruct, serialize_table, serialize_tuple
from .table_model import HeaderNode, SourceTable, validate_table
from .tokens import get_counter

log = logging.getLogger("ctqa")

EXIT_OK, EXIT_INPUT, EXIT_BACKEND = 0, 2, 3
ENV_PREFIX = "CTQA_"


@dataclass
class RunConfig:
    dataset_name: str = "canonical"
    dataset_path: str = ""
    backend: str = "replay"
    model_name: str = "text-davinci-003"
    context_limit: int = 4097
    generation_reserve: int = 512
    max_generated_tokens: int = 512
    temperature: float = 0.0
    concurrency_cap: int = 4
    mode: str = "auto"
    output_dir: str = "ctqa-out"
    transcript_dir: str = ""
    mock_script: str = ""
    counter: str = "auto"
    timeout_s: float = 120.0
    seed: int = 0
    endpoint_url: str = ""

    def validate(self) -> None:
        if self.backend not in ("live", "mock", "replay"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.dataset_name not in ("canonical", "hitab", "aitqa"):
            raise ValueError(f"unknown dataset {self.dataset_name!r}")
        Mode(self.mode)
        TokenBudget(self.context_limit, self.generation_reserve)
        if self.backend == "replay" and not self.transcript_dir:
            raise ValueError("replay backend requires --transcript-dir")
        if self.backend == "mock" and not self.mock_script:
            raise ValueError("mock backend requires --mock-script")
        if self.concurrency_cap < 1:
            raise ValueError("concurrency cap must be >= 1")

    @classmethod
    def resolve(cls, args: argparse.Namespace, env=None) -> "RunConfig":
        env = os.environ if env is None else env
        values: dict = {}
        if getattr(args, "config", None):
            with open(args.config, encoding="utf-8") as fh:
                file_values = json.load(fh)
            if "api_key" in file_values:
                raise ValueError("credentials are read from the environment only")
            values.update(file_values)
        types = {f.name: f.type for f in fields(cls)}
        for name in types:
            raw = env.get(ENV_PREFIX + name.upper())
            if raw is not None:
                values[name] = raw
        for name in types:
            v = getattr(args, name, None)
            if v is not None:
                values[name] = v
        unknown = set(values) - set(types)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        defaults = cls()
        for name, v in values.items():
            kind = type(getattr(defaults, name))
            values[name] = kind(v)
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            model_name=self.model_name,
            max_generated_tokens=self.max_generated_tokens,
            temperature=self.temperature,
            budget=TokenBudget(self.context_limit, self.generation_reserve),
            mode=Mode(self.mode),
            timeout_s=self.timeout_s,
        )


def _load_mock_script(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("responses", [])
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise ValueError("mock script must be a JSON list of response strings")
    return data


def build_gateway(cfg: RunConfig, counter, record_dir: str | None = None) -> Gateway:
    if cfg.backend == "replay":
        backend = ReplayBackend(cfg.transcript_dir)
        return Gateway(backend, concurrency_cap=cfg.concurrency_cap)
    if cfg.backend == "mock":
        backend = MockBackend(_load_mock_script(cfg.mock_script))
        # scripted responses are consumed in order, so calls must be serial
        return Gateway(backend, concurrency_cap=1, transcript_dir=record_dir)
    backend = LiveBackend(cfg.endpoint_url or None, timeout=cfg.timeout_s,
                          context_limit=cfg.context_limit, counter=counter)
    return Gateway(backend, concurrency_cap=cfg.concurrency_cap, transcript_dir=record_dir, counter=counter)


# --------------------------------------------------------------------------
# table loading helpers


def _read_table(path: Path) -> SourceTable:
    """Load a canonical table, reporting every violation instead of just the first."""
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    table = table_from_document(doc)
    report = validate_table(table)
    if report:
        raise IntegrityError(f"{path}: {len(report)} violation(s)", report)
    return table


def _table_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if (path / "tables").is_dir():
        path = path / "tables"
    return sorted(path.glob("*.json"))


def format_blocks(table: SourceTable) -> str:
    title, cols, rows, cells = serialize_table(reconstruct(table))
    return f"title: {title}\ncolumn header: {cols}\nrow header: {rows}\nnon-header: {cells}\n"


def _input_error(exc: Exception) -> int:
    print(f"error: {exc}", file=sys.stderr)
    for v in getattr(exc, "violations", []):
        print(f"  {v}", file=sys.stderr)
    return EXIT_INPUT


# --------------------------------------------------------------------------
# commands


def cmd_reconstruct(args) -> int:
    src = Path(args.path)
    if not src.exists():
        return _input_error(FileNotFoundError(f"{src} does not exist"))
    files = _table_files(src)
    try:
        tables = [_read_table(f) for f in files]
    except CtqaError as exc:
        return _input_error(exc)
    if src.is_file() and not args.out:
        sys.stdout.write(format_blocks(tables[0]))
        return EXIT_OK
    out = Path(args.out or "tuples")
    out.mkdir(parents=True, exist_ok=True)
    for table in tables:
        (out / f"{table.table_id}.txt").write_text(format_blocks(table), encoding="utf-8")
    print(f"wrote {len(tables)} file(s) to {out}")
    return EXIT_OK


def _print_tree(nodes: tuple[HeaderNode, ...], tag: str, indent: int = 0) -> None:
    for n in nodes:
        print(f"{'  ' * indent}- {n.value!r}  level {n.level}, {tag} {n.span_start}-{n.span_end}")
        _print_tree(n.children, tag, indent + 1)


def cmd_inspect(args) -> int:
    try:
        table = _read_table(Path(args.path))
    except (CtqaError, OSError) as exc:
        return _input_error(exc)
    rt = reconstruct(table)
    print(f"table {table.table_id}: {table.title}")
    print(f"data region {table.grid.rows} x {table.grid.cols}, "
          f"{len(table.grid.merged_regions)} merged region(s)")
    print("column headers:")
    _print_tree(table.column_tree.roots, "cols")
    print("row headers:")
    _print_tree(table.row_tree.roots, "rows")
    print("tuples:")
    for t in rt.column_tuples + rt.row_tuples:
        print("  " + serialize_tuple(t))
    limit = args.max_cells
    for t in rt.data_tuples[:limit]:
        print("  " + serialize_tuple(t))
    if len(rt.data_tuples) > limit:
        print(f"  ... {len(rt.data_tuples) - limit} more data tuple(s)")
    return EXIT_OK


def cmd_ask(args) -> int:
    try:
        cfg = RunConfig.resolve(args)
        table = _read_table(Path(args.table))
    except (CtqaError, OSError, ValueError) as exc:
        return _input_error(exc)
    counter = get_counter(cfg.counter)
    try:
        gateway = build_gateway(cfg, counter, cfg.transcript_dir if args.record else None)
    except (GatewayError, ValueError, OSError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    pipeline = Pipeline(gateway, cfg.pipeline_config(), counter)
    pred = pipeline.answer(table, args.question, args.qa_id or table.table_id)
    print(f"route: {pred.route_taken.value}")
    for flag in pred.flags:
        print(f"flag: {flag}")
    if pred.failure:
        print(f"failure: {pred.failure}: {pred.detail}", file=sys.stderr)
        return EXIT_BACKEND
    s = pred.structured
    print("column header: " + ", ".join(serialize_tuple(t) for t in s.column_headers))
    print("row header: " + ", ".join(serialize_tuple(t) for t in s.row_headers))
    print("cell: " + ", ".join(serialize_tuple(t) for t in s.cells))
    print(f"operation: {s.operation}")
    print(f"answer: {s.answer}")
    if s.idn:
        print("idn: true")
    return EXIT_OK


def load_named_dataset(name: str, path: str) -> Dataset:
    if name == "hitab":
        return load_hitab(path)
    if name == "aitqa":
        return load_aitqa(path)
    return load_dataset(path)


def _read_predictions(path: Path) -> dict[str, Prediction]:
    preds: dict[str, Prediction] = {}
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    try:
                        p = Prediction.from_record(json.loads(line))
                    except (json.JSONDecodeError, KeyError):
                        # torn final line from an interrupted run
                        continue
                    preds[p.qa_id] = p
    return preds


def run_eval(cfg: RunConfig, record: bool = False, limit: int | None = None, split: str | None = None,
             strict: bool = False, error_samples: int = 0) -> int:
    try:
        dataset = load_named_dataset(cfg.dataset_name, cfg.dataset_path)
    except (CtqaError, OSError, ValueError) as exc:
        return _input_error(exc)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    counter = get_counter(cfg.counter)
    record_dir = None
    if record:
        record_dir = cfg.transcript_dir or str(out / "transcripts")
    try:
        gateway = build_gateway(cfg, counter, record_dir)
    except (GatewayError, ValueError, OSError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    pipeline = Pipeline(gateway, cfg.pipeline_config(), counter)

    pairs = [p for p in dataset.pairs if split is None or p.split.value == split.upper()]
    if limit is not None:
        pairs = pairs[:limit]
    pred_path = out / "predictions.jsonl"
    done = _read_predictions(pred_path)
    todo = [p for p in pairs if p.qa_id not in done]
    log.info("%d pair(s) selected, %d already predicted, %d to run", len(pairs), len(pairs) - len(todo), len(todo))

    lock = threading.Lock()
    if done:
        # rewrite so a torn trailing line from an interrupted run is dropped
        with open(pred_path, "w", encoding="utf-8") as fh:
            for p in done.values():
                fh.write(json.dumps(p.to_record(), ensure_ascii=False) + "\n")
    with open(pred_path, "a", encoding="utf-8") as fh:
        def work(pair):
            pred = pipeline.answer(dataset.tables[pair.table_id], pair.question, pair.qa_id)
            with lock:
                fh.write(json.dumps(pred.to_record(), ensure_ascii=False) + "\n")
                fh.flush()
            return pred

        pool = cf.ThreadPoolExecutor(max_workers=cfg.concurrency_cap)
        futures = [pool.submit(work, p) for p in todo]
        try:
            for f in cf.as_completed(futures):
                f.result()
        except KeyboardInterrupt:
            print("interrupted; finishing in-flight questions", file=sys.stderr)
            for f in futures:
                f.cancel()
            pool.shutdown(wait=True)
            return 130
        pool.shutdown(wait=True)

    selected = {p.qa_id for p in pairs}
    preds = [p for q, p in sorted(_read_predictions(pred_path).items()) if q in selected]
    sub = Dataset(dataset.name, dataset.tables, tuple(p for p in dataset.pairs if p.qa_id in selected),
                  dataset.tag_vocabulary)
    report = evaluate(preds, sub, strict=strict, counter_name=counter.name)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.txt").write_text(report.summary_table(), encoding="utf-8")
    if error_samples:
        sample = error_sample(report, error_samples, cfg.seed)
        with open(out / "error_sample.jsonl", "w", encoding="utf-8") as fh:
            for item in sample:
                fh.write(json.dumps(dataclasses.asdict(item), ensure_ascii=False) + "\n")
    sys.stdout.write(report.summary_table())
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        cfg = RunConfig.resolve(args)
    except (ValueError, OSError) as exc:
        return _input_error(exc)
    return run_eval(cfg, record=args.record, limit=args.limit, split=args.split, strict=args.strict,
                    error_samples=args.error_samples)


def cmd_record(args) -> int:
    try:
        cfg = RunConfig.resolve(args)
    except (ValueError, OSError) as exc:
        return _input_error(exc)
    if cfg.backend == "replay":
        return _input_error(ValueError("record needs a live or mock backend"))
    return run_eval(cfg, record=True, limit=args.limit, split=args.split, strict=False,
                    error_samples=args.error_samples)


# --------------------------------------------------------------------------
# argument parsing


def _add_run_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON file with RunConfig keys")
    g.add_argument("--backend", choices=["live", "mock", "replay"])
    g.add_argument("--model", dest="model_name")
    g.add_argument("--context-limit", type=int)
    g.add_argument("--generation-reserve", type=int)
    g.add_argument("--max-tokens", dest="max_generated_tokens", type=int)
    g.add_argument("--temperature", type=float)
    g.add_argument("--concurrency", dest="concurrency_cap", type=int)
    g.add_argument("--mode", choices=[m.value for m in Mode])
    g.add_argument("--output-dir")
    g.add_argument("--transcript-dir")
    g.add_argument("--mock-script", help="JSON list of scripted responses (mock backend)")
    g.add_argument("--counter", choices=["auto", "bpe", "bytes"])
    g.add_argument("--timeout", dest="timeout_s", type=float, help="per-question timeout in seconds")
    g.add_argument("--seed", type=int)
    g.add_argument("--endpoint-url")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctqa", description="Complex-table QA with tuple-encoded tables")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="print tuple blocks for a table file or directory")
    p.add_argument("path")
    p.add_argument("--out", help="output directory (one file per table)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("inspect", help="pretty-print a table's header trees and tuples")
    p.add_argument("path")
    p.add_argument("--max-cells", type=int, default=50)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("ask", help="answer one question about one table")
    p.add_argument("table")
    p.add_argument("question")
    p.add_argument("--qa-id")
    p.add_argument("--record", action="store_true", help="write a transcript to --transcript-dir")
    _add_run_options(p)
    p.set_defaults(func=cmd_ask)

    for name, func, help_text in (("eval", cmd_eval, "predict and score a dataset"),
                                  ("record", cmd_record, "like eval, recording transcripts")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--dataset", dest="dataset_name", choices=["canonical", "hitab", "aitqa"])
        p.add_argument("--dataset-path")
        p.add_argument("--limit", type=int)
        p.add_argument("--split", choices=["train", "dev", "test", "unsplit"])
        p.add_argument("--error-samples", type=int, default=0)
        if name == "eval":
            p.add_argument("--record", action="store_true")
            p.add_argument("--strict", action="store_true", help="fail if any selected pair lacks a prediction")
        _add_run_options(p)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
