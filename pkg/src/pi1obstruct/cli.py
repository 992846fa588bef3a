"""Command-line entry point ``pi1-obstruct``.

Exit codes: 0 every expectation met, 1 some expectation missed (the report
is still written), 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Sequence

from . import __version__
from .certify import Tolerances, certify
from .verify import SUITES, run_suite
from .zoo import CASES, build_case, case_info

log = logging.getLogger("pi1obstruct")

EXIT_OK, EXIT_EXPECTATION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
FORMATS = ("json", "csv", "text")


class UsageError(Exception):
    pass


@dataclass
class CaseOverrides:
    nodes: int | None = None
    samples: int | None = None
    seed: int | None = None
    tol_membership: float | None = None
    tol_invariance: float | None = None

    def merged(self, other: "CaseOverrides") -> "CaseOverrides":
        """Values of ``other`` win where set."""
        return CaseOverrides(*(o if o is not None else s for s, o in zip(self.astuple(), other.astuple())))

    def astuple(self) -> tuple:
        return (self.nodes, self.samples, self.seed, self.tol_membership, self.tol_invariance)


@dataclass
class RunConfig:
    cases: list[str]
    overrides: CaseOverrides = field(default_factory=CaseOverrides)
    per_case: dict[str, CaseOverrides] = field(default_factory=dict)
    out: str | None = None
    format: str = "json"
    force: bool = False
    timing: bool = False
    file_defaults: CaseOverrides = field(default_factory=CaseOverrides)

    def for_case(self, case_id: str) -> CaseOverrides:
        """File sections apply first, then command-line flags."""
        file_level = self.per_case.get(case_id, CaseOverrides())
        return self.file_defaults.merged(file_level).merged(self.overrides)


_INT_KEYS = ("nodes", "samples", "seed")
_FLOAT_KEYS = ("tol_membership", "tol_invariance")


def _parse_overrides(section: configparser.SectionProxy, where: str) -> CaseOverrides:
    out = CaseOverrides()
    for key, value in section.items():
        if key in ("case", "cases", "format", "out"):
            continue
        try:
            if key in _INT_KEYS:
                setattr(out, key, int(value))
            elif key in _FLOAT_KEYS:
                setattr(out, key, float(value))
            else:
                raise UsageError(f"{where}: unknown key {key!r}")
        except ValueError:
            raise UsageError(f"{where}: bad value for {key!r}: {value!r}") from None
    return out


def load_config_file(path: str) -> tuple[dict, CaseOverrides, dict[str, CaseOverrides]]:
    """INI file: a ``[run]`` section plus optional ``[case:<id>]`` sections."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}") from exc
    run = dict(parser["run"]) if parser.has_section("run") else {}
    defaults = _parse_overrides(parser["run"], "[run]") if parser.has_section("run") else CaseOverrides()
    per_case = {}
    for name in parser.sections():
        if name == "run":
            continue
        if not name.startswith("case:"):
            raise UsageError(f"unknown config section [{name}]")
        per_case[name[5:]] = _parse_overrides(parser[name], f"[{name}]")
    return run, defaults, per_case


def _split_cases(values: Sequence[str]) -> list[str]:
    out = []
    for v in values:
        out += [c.strip() for c in v.split(",") if c.strip()]
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_run, file_defaults, per_case = ({}, CaseOverrides(), {})
    if args.config:
        file_run, file_defaults, per_case = load_config_file(args.config)
    cases = _split_cases(args.case or []) or _split_cases([file_run.get("cases", file_run.get("case", ""))])
    if not cases:
        raise UsageError("no case requested (use --case ID or --case all)")
    if "all" in cases:
        cases = list(CASES)
    seen = set()
    for c in cases:
        try:
            case_info(c)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        if c in seen:
            raise UsageError(f"case {c!r} requested twice")
        seen.add(c)
    for c in per_case:
        try:
            case_info(c)
        except KeyError as exc:
            raise UsageError(f"config section for {exc.args[0]}") from None
    fmt = args.format or file_run.get("format", "json")
    if fmt not in FORMATS:
        raise UsageError(f"unknown format {fmt!r}")
    flags = CaseOverrides(args.nodes, args.samples, args.seed, args.tol_membership, args.tol_invariance)
    for name, v in zip(("nodes", "samples"), (flags.nodes, flags.samples)):
        if v is not None and v < 2:
            raise UsageError(f"--{name} must be at least 2")
    if flags.seed is not None and not 0 <= flags.seed < 2**64:
        raise UsageError("--seed must fit in 64 unsigned bits")
    return RunConfig(cases, flags, per_case, args.out or file_run.get("out"), fmt, args.force, args.timing,
                     file_defaults)


def _case_config(cfg: RunConfig, case_id: str):
    ov = cfg.for_case(case_id)
    case = build_case(case_id, ov.nodes, ov.samples, ov.seed)
    tol = Tolerances(
        ov.tol_membership if ov.tol_membership is not None else case.tolerances.membership,
        ov.tol_invariance if ov.tol_invariance is not None else case.tolerances.invariance,
    )
    case.tolerances = tol
    return case


def _config_record(cfg: RunConfig) -> dict:
    """The resolved run configuration, as embedded in reports (output location omitted)."""
    ov = cfg.overrides
    return {
        "cases": cfg.cases,
        "overrides": {k: v for k, v in zip(("nodes", "samples", "seed", "tol_membership", "tol_invariance"),
                                           ov.astuple())},
        "file_defaults": dict(zip(("nodes", "samples", "seed", "tol_membership", "tol_invariance"),
                                  cfg.file_defaults.astuple())),
        "per_case": {c: dict(zip(("nodes", "samples", "seed", "tol_membership", "tol_invariance"), o.astuple()))
                     for c, o in sorted(cfg.per_case.items())},
        "format": cfg.format,
    }


def run_certify(cfg: RunConfig) -> tuple[dict, bool]:
    rows = []
    ok = True
    for cid in cfg.cases:
        case = _case_config(cfg, cid)
        start = time.perf_counter()
        log.info("certifying %s", cid)
        report = certify(case)
        row = report.as_dict()
        row["config"] = {
            "quadrature": case.quadrature.as_dict(),
            "tolerances": {"membership": case.tolerances.membership, "invariance": case.tolerances.invariance},
            "loop_nodes": case.loop_nodes,
        }
        if cfg.timing:
            row["wall_time_ms"] = round(1000.0 * (time.perf_counter() - start), 1)
        ok &= report.meets_expectation
        rows.append(row)
    doc = {
        "tool": "pi1-obstruct",
        "version": __version__,
        "config": _config_record(cfg),
        "reports": rows,
        "all_expectations_met": ok,
    }
    return doc, ok


CSV_FIELDS = ["case", "topic", "verdict", "expected", "meets_expectation", "membership_max_residual", "invariance_C",
              "invariance_max_residual", "obstruction_value", "obstruction_error", "obstruction_nodes",
              "chart_integral"]


def _flat_row(r: dict) -> dict:
    return {
        "case": r["case"], "topic": r["topic"], "verdict": r["verdict"], "expected": r["expected"],
        "meets_expectation": r["meets_expectation"],
        "membership_max_residual": repr(r["membership"]["max_residual"]),
        "invariance_C": repr(r["invariance"]["C"]),
        "invariance_max_residual": repr(r["invariance"]["max_residual"]),
        "obstruction_value": repr(r["obstruction"]["value"]),
        "obstruction_error": repr(r["obstruction"]["error"]),
        "obstruction_nodes": r["obstruction"]["nodes"],
        "chart_integral": repr(r["obstruction"]["chart_integral"]),
    }


def render(doc: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in doc["reports"]:
            w.writerow(_flat_row(r))
        return buf.getvalue()
    lines = []
    for r in doc["reports"]:
        ob = r["obstruction"]
        mark = "ok" if r["meets_expectation"] else "UNEXPECTED"
        lines.append(
            f"{r['case']:<22} {r['verdict']:<14} expected {r['expected']:<14} {mark:<10} "
            f"obstruction {ob['value']:.10g} +- {ob['error']:.3g}  C={r['invariance']['C']:.6g}  "
            f"membership {r['membership']['max_residual']:.2e}  invariance {r['invariance']['max_residual']:.2e}"
        )
    return "\n".join(lines) + "\n"


def write_output(text: str, path: str | None, force: bool) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    mode = "w" if force else "x"
    try:
        with open(path, mode, encoding="utf-8", newline="") as fh:
            fh.write(text)
    except FileExistsError:
        raise OSError(f"refusing to overwrite existing file {path} (use --force)") from None


def cmd_list(fmt: str) -> str:
    rows = [
        {"id": i.case_id, "manifold": i.manifold, "kernel": i.kernel, "action": i.action, "topic": i.topic,
         "expected": i.expected}
        for i in CASES.values()
    ]
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    return "".join(f"{r['id']:<22} {r['manifold']:<22} {r['kernel']:<10} {r['action']:<30} {r['topic']:<28} "
                   f"{r['expected']}\n" for r in rows)


def cmd_verify(suite: str, fmt: str) -> tuple[str, bool]:
    names = list(SUITES) if suite == "all" else [suite]
    checks = []
    for name in names:
        checks += [dict(suite=name, **c.as_dict()) for c in run_suite(name)]
    ok = all(c["passed"] for c in checks)
    if fmt == "json":
        text = json.dumps({"checks": checks, "passed": ok}, indent=2) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["suite", "name", "passed", "detail"], lineterminator="\n")
        w.writeheader()
        w.writerows(checks)
        text = buf.getvalue()
    else:
        text = "".join(f"{'PASS' if c['passed'] else 'FAIL'}  {c['suite']}: {c['name']}  ({c['detail']})\n"
                       for c in checks)
    return text, ok


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pi1-obstruct", description="Numerical certificates for infinite-order loops of transformations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ls = sub.add_parser("list", help="list built-in cases")
    ls.add_argument("--format", choices=FORMATS, default="text")

    c = sub.add_parser("certify", help="run certifications and write a report")
    c.add_argument("--case", action="append", help="case id, comma list, or 'all' (repeatable)")
    c.add_argument("--nodes", type=int, help="grid nodes per axis")
    c.add_argument("--samples", type=int, help="Monte Carlo sample count")
    c.add_argument("--seed", type=int, help="Monte Carlo seed")
    c.add_argument("--tol-membership", type=float)
    c.add_argument("--tol-invariance", type=float)
    c.add_argument("--out", help="report path (default: stdout)")
    c.add_argument("--format", choices=FORMATS)
    c.add_argument("--config", help="INI file with [run] and [case:<id>] sections")
    c.add_argument("--force", action="store_true", help="overwrite an existing report file")
    c.add_argument("--timing", action="store_true", help="add wall_time_ms to each report entry")

    v = sub.add_parser("verify", help="run a self-check suite")
    v.add_argument("suite", choices=list(SUITES) + ["all"])
    v.add_argument("--format", choices=FORMATS, default="text")
    v.add_argument("--out")
    v.add_argument("--force", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list":
            write_output(cmd_list(args.format), None, False)
            return EXIT_OK
        if args.command == "verify":
            text, ok = cmd_verify(args.suite, args.format)
            write_output(text, args.out, args.force)
            return EXIT_OK if ok else EXIT_EXPECTATION
        cfg = resolve_config(args)
        if cfg.out and os.path.exists(cfg.out) and not cfg.force:
            raise OSError(f"refusing to overwrite existing file {cfg.out} (use --force)")
        doc, ok = run_certify(cfg)
        write_output(render(doc, cfg.format), cfg.out, cfg.force)
        return EXIT_OK if ok else EXIT_EXPECTATION
    except UsageError as exc:
        print(f"pi1-obstruct: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"pi1-obstruct: error: {exc}", file=sys.stderr)
        return EXIT_IO
