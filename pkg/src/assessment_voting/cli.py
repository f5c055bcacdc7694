"""Command-line front end.

Every command reads its options from flags, from a JSON config file, or
both (flags win). The resolved options are echoed at the top of the
output so a run can be repeated from its own output file.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import equilibrium as eqm
from . import multiway as mw
from . import simulator as sim
from . import sizing_welfare as sw
from .poisson_core import SeriesTolerance, TruncationError

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_PRECONDITION = 3
EXIT_NONCONVERGENCE = 4
OUTDIR_ENV = "ASSESSMENT_VOTING_OUTDIR"


class ArgumentError(ValueError):
    pass


def _float_list(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


@dataclass(frozen=True)
class Option:
    name: str
    type: object
    default: object
    help: str
    choices: tuple | None = None
    required: bool = False

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


_TOL_OPTIONS = (
    Option("rel_tol", float, 1e-14, "relative truncation tolerance for Poisson series"),
    Option("max_terms", int, 100_000, "maximum number of series terms before giving up"),
)

COMMANDS: dict[str, tuple[str, tuple[Option, ...]]] = {
    "solve": ("enumerate second-round equilibria at a first-round lead", (
        Option("c", float, None, "voting cost, 0 < c < 1/2", required=True),
        Option("d", int, 0, "first-round lead of A over B"),
        Option("n2", float, 10_000.0, "expected size of the second-round population"),
        Option("p_a", float, 0.575, "probability that a citizen prefers A"),
        Option("mixed", str, "yes", "also search for totally mixed equilibria", ("yes", "no")),
    )),
    "dstar": ("lead threshold d*(c) and its sharp counterpart", (
        Option("c", float, None, "voting cost, 0 < c < 1/2", required=True),
    )),
    "cstar": ("cost below which a one-sided equilibrium exists at lead d", (
        Option("d", int, None, "first-round lead, d >= 2", required=True),
    )),
    "size": ("assessment-group size N1* for a failure probability", (
        Option("epsilon", float, 0.1, "allowed failure probability"),
        Option("c", float, None, "voting cost, 0 < c < 1/2", required=True),
        Option("gap", float, None, "preference gap p_A - p_B", required=True),
        Option("n1", int, None, "group size at which to evaluate the failure bound (default: N1*)"),
    )),
    "table2": ("group sizes over the standard grid of costs, gaps and epsilons", ()),
    "welfare": ("average welfare of assessment voting and one-round voting", (
        Option("p_a", float, 0.575, "probability that a citizen prefers A"),
        Option("c", float, None, "voting cost, 0 < c < 1/2", required=True),
        Option("n1", int, None, "assessment-group size", required=True),
        Option("n2", float, None, "expected size of the second-round population", required=True),
        Option("epsilon", float, 0.1, "failure probability used for the reported N1*"),
        Option("turnout", str, "both_types", "voluntary-voting turnout charged",
               ("both_types", "single")),
    )),
    "simulate": ("Monte-Carlo runs of one voting procedure", (
        Option("procedure", str, "av", "procedure to simulate", ("av", "voluntary", "compulsory")),
        Option("p_a", float, 0.575, "probability that a citizen prefers A"),
        Option("c", float, None, "voting cost, 0 < c < 1/2", required=True),
        Option("n1", int, None, "assessment-group size", required=True),
        Option("n2", float, None, "expected size of the second-round population", required=True),
        Option("runs", int, 1000, "number of simulated elections"),
        Option("seed", int, 0, "master seed (64-bit unsigned)"),
        Option("policy", str, "NoShowPreferred", "equilibrium selection rule",
               tuple(p.value for p in sim.SelectionPolicy)),
        Option("workers", int, 1, "worker processes; results do not depend on this"),
        Option("detail", str, None, "write per-run JSON lines to this file"),
    )),
    "multiway": ("no-show checks with several alternatives", (
        Option("mode", str, "gain", "what to compute", ("gain", "simulate", "grid")),
        Option("c", float, None, "voting cost, 0 < c < 1/2", required=True),
        Option("utilities", _float_list, None, "comma list of utilities by rank, 1 down to 0"),
        Option("intensities", _float_list, None, "comma list of second-round vote intensities"),
        Option("tally", _int_list, None, "comma list of first-round votes, ascending (gain mode)"),
        Option("probs", _float_list, None, "comma list of first-round vote shares (simulate mode)"),
        Option("n1", int, None, "assessment-group size (simulate mode)"),
        Option("runs", int, 1000, "number of simulated elections (simulate mode)"),
        Option("seed", int, 0, "master seed (simulate mode)"),
        Option("costs", _float_list, None, "comma list of costs (grid mode)"),
        Option("gaps", _int_list, None, "comma list of leads a_m - a_1 (grid mode)"),
        Option("etas", _float_list, None, "comma list of intensities (grid mode)"),
        Option("m", int, 3, "number of alternatives (grid mode)"),
    )),
}

_COMMON = (
    Option("format", str, "json", "output format", ("json", "csv", "tsv")),
    Option("output", str, None, f"output file (relative paths go under ${OUTDIR_ENV})"),
)


def options_for(command: str) -> tuple[Option, ...]:
    return COMMANDS[command][1] + _TOL_OPTIONS + _COMMON


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ArgumentError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="assessment-voting", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (help_text, _) in COMMANDS.items():
        sp = subs.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--config", default=None, help="JSON file with option values; flags override it")
        for opt in options_for(name):
            default = "required" if opt.required else ("unset" if opt.default is None else opt.default)
            sp.add_argument(opt.flag, dest=opt.name, type=opt.type, choices=opt.choices,
                            default=argparse.SUPPRESS, help=f"{opt.help} (default: {default})")
    return parser


@dataclass(frozen=True)
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)

    @property
    def output_format(self) -> str:
        return self.options["format"]

    def echo(self) -> dict:
        return {k: v for k, v in self.options.items() if k not in ("format", "output", "detail")}


def _load_config_file(path: str, command: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArgumentError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ArgumentError("config file must hold a JSON object")
    if "config" in data and "result" in data:  # a previous output document
        if data.get("command", command) != command:
            raise ArgumentError(f"config file is for command {data.get('command')!r}, not {command!r}")
        data = data["config"]
    data = dict(data)
    if data.pop("command", command) != command:
        raise ArgumentError(f"config file names a different command than {command!r}")
    return data


def resolve_config(argv: list[str]) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    config_path = ns.pop("config", None)
    opts = {o.name: o for o in options_for(command)}
    resolved = {name: o.default for name, o in opts.items()}
    if config_path:
        from_file = _load_config_file(config_path, command)
        unknown = sorted(set(from_file) - set(opts))
        if unknown:
            raise ArgumentError(f"unknown config keys for {command}: {', '.join(unknown)}")
        for key, value in from_file.items():
            opt = opts[key]
            if isinstance(value, str) and opt.type in (_float_list, _int_list):
                value = opt.type(value)
            if opt.choices and value not in opt.choices:
                raise ArgumentError(f"{key} must be one of {list(opt.choices)}, got {value!r}")
            resolved[key] = value
    resolved.update(ns)
    return RunConfig(command, resolved)


def _need(opts: dict, *names: str) -> None:
    missing = [n for n in names if opts.get(n) is None]
    if missing:
        raise ArgumentError("missing required option(s): " +
                            ", ".join("--" + n.replace("_", "-") for n in missing))


def _cost(opts: dict) -> float:
    _need(opts, "c")
    c = opts["c"]
    if not (0 < c < 0.5):
        raise ArgumentError(f"c must satisfy 0 < c < 1/2, got {c}")
    return c


def _tol(opts: dict) -> SeriesTolerance:
    return SeriesTolerance(opts["rel_tol"], opts["max_terms"])


def _params(opts: dict) -> sw.ElectionParams:
    c = _cost(opts)
    _need(opts, "p_a", "n1", "n2")
    return sw.ElectionParams(opts["p_a"], c, opts["n1"], opts["n2"])


def _resolve_path(path: str) -> Path:
    p = Path(path)
    outdir = os.environ.get(OUTDIR_ENV)
    if outdir and not p.is_absolute():
        p = Path(outdir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


# --------------------------------------------------------------------------
# commands; each returns a list of flat rows


def _cmd_solve(o):
    c = _cost(o)
    eqs = eqm.enumerate_equilibria(c, o["d"], o["n2"], o["p_a"], _tol(o),
                                   include_mixed=o["mixed"] == "yes")
    return [{"kind": e.kind.value, "x_a": e.x_a, "x_b": e.x_b, "alpha_a": e.alpha_a,
             "alpha_b": e.alpha_b, "residual": e.residual, "slack": e.slack_check,
             "feasible": e.feasible} for e in eqs.items]


def _cmd_dstar(o):
    c = _cost(o)
    return [{"c": c, "d_star": eqm.d_star(c), "d_star_sharp": eqm.d_star_sharp(c)}]


def _cmd_cstar(o):
    _need(o, "d")
    d = o["d"]
    if d < 2:
        raise ArgumentError(f"d must satisfy d >= 2, got {d}")
    return [{"d": d, "c_star": eqm.c_star(d), "c_star_remark": eqm.c_star_remark(d),
             "c_star_sharp": eqm.c_star_sharp(d)}]


def _cmd_size(o):
    c = _cost(o)
    _need(o, "gap", "epsilon")
    sized = sw.n1_star(o["epsilon"], c, o["gap"])
    n1 = sized.n1_star if o.get("n1") is None else o["n1"]
    bound = sw.hoeffding_failure_bound(n1, sized.gap, sized.d_star)
    return [{**sized.as_row(), "n1": n1, "failure_bound": bound}]


def _cmd_table2(o):
    return sw.reproduce_table2().rows()


def _cmd_welfare(o):
    report = sw.welfare_report(_params(o), o["epsilon"], _tol(o), o["turnout"])
    return [report.as_dict()]


def _cmd_simulate(o):
    params = _params(o)
    record = o.get("detail") is not None
    if o["procedure"] == "av":
        cfg = sim.SimConfig(params, o["runs"], o["seed"], o["policy"], record, o["workers"], _tol(o))
        summary = sim.simulate_av(cfg)
    elif o["procedure"] == "voluntary":
        summary = sim.simulate_one_round_voluntary(params, o["runs"], o["seed"], _tol(o),
                                                   o["workers"], record)
    else:
        summary = sim.simulate_one_round_compulsory(params, o["runs"], o["seed"], o["workers"], record)
    if record:
        with open(_resolve_path(o["detail"]), "w") as fh:
            sim.write_jsonl(summary.outcomes, fh, header={"command": "simulate", **o})
    return [summary.as_dict()]


def _cmd_multiway(o):
    c = _cost(o)
    mode = o["mode"]
    if mode == "grid":
        _need(o, "costs", "gaps", "etas")
        return mw.certification_grid(o["costs"], o["gaps"], o["etas"], o["m"])
    _need(o, "utilities", "intensities")
    spec = mw.MultiAltSpec(tuple(o["utilities"]), tuple(o["intensities"]))
    if mode == "gain":
        _need(o, "tally")
        tally = mw.FirstRoundTally(tuple(o["tally"]))
        gain = mw.no_show_gain_upper(spec, tally, 0, _tol(o))
        return [{"gain": gain, "c": c, "certified": gain < c, "d_double_star": mw.d_double_star(c),
                 "gap_top_bottom": tally.a[-1] - tally.a[0],
                 "gap_top_second": tally.a[-1] - tally.a[-2]}]
    _need(o, "probs", "n1")
    return [mw.simulate_multiway(spec, o["probs"], o["n1"], o["runs"], o["seed"], c).as_dict()]


_HANDLERS = {"solve": _cmd_solve, "dstar": _cmd_dstar, "cstar": _cmd_cstar, "size": _cmd_size,
             "table2": _cmd_table2, "welfare": _cmd_welfare, "simulate": _cmd_simulate,
             "multiway": _cmd_multiway}


def execute(config: RunConfig) -> list[dict]:
    return _HANDLERS[config.command](config.options)


# --------------------------------------------------------------------------
# output


def _display(v: float) -> str:
    return f"{v:.6g}"


def _cell(v):
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(v)
    return v


def render(config: RunConfig, rows: list[dict]) -> str:
    fmt = config.output_format
    if fmt == "json":
        doc = {"command": config.command, "config": config.echo(), "result": rows}
        return json.dumps(doc, indent=2, allow_nan=True) + "\n"
    delimiter = "," if fmt == "csv" else "\t"
    buf = io.StringIO()
    buf.write(f"# command={config.command}\n")
    buf.write(f"# config={json.dumps(config.echo(), sort_keys=True)}\n")
    if not rows:
        return buf.getvalue()
    fields = []
    for key, value in rows[0].items():
        fields.append(key)
        if isinstance(value, float):
            fields.append(key + "_display")
    writer = csv.DictWriter(buf, fieldnames=fields, delimiter=delimiter, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        out = {}
        for key, value in row.items():
            out[key] = _cell(value)
            if key + "_display" in fields:
                out[key + "_display"] = _display(value) if isinstance(value, float) else ""
        writer.writerow(out)
    return buf.getvalue()


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = resolve_config(argv)
        rows = execute(config)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except sw.PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (TruncationError, eqm.EquilibriumDomainError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    text = render(config, rows)
    if config.options.get("output"):
        _resolve_path(config.options["output"]).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
