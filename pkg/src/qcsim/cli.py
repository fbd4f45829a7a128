"""Command-line entry point.

    qcsim run CONFIG [--seed N] [--out-dir DIR] [--format csv|json-lines]
    qcsim validate CONFIG
    qcsim budget {jitter,sfdr,bias} [--sweep START:STOP:POINTS | --values V ...]
    qcsim selftest

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .config import BUDGET_KINDS, ConfigError, validate_config
from .orchestrator import RunResult, run, write_result

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _parse_sweep(text: str) -> list[float]:
    try:
        start, stop, points = text.split(":")
        return np.linspace(float(start), float(stop), int(points)).tolist()
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP:POINTS, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qcsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qcsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def outputs(sp):
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out-dir", default="results", help="output directory (default: results)")
        sp.add_argument("--format", choices=("csv", "json-lines"), default="csv")

    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    outputs(r)

    v = sub.add_parser("validate", help="check a config file and print it normalized")
    v.add_argument("config")

    b = sub.add_parser("budget", help="fidelity budget sweep")
    b.add_argument("kind", choices=BUDGET_KINDS)
    g = b.add_mutually_exclusive_group()
    g.add_argument("--sweep", type=_parse_sweep, metavar="START:STOP:POINTS")
    g.add_argument("--values", type=float, nargs="+")
    outputs(b)

    sub.add_parser("selftest", help="quick end-to-end consistency checks")
    return p


_BUDGET_DEFAULTS = {
    "jitter": np.linspace(0, 20e-12, 21).tolist(),
    "sfdr": np.linspace(-80, -20, 13).tolist(),
    "bias": np.linspace(0, 20e-6, 21).tolist(),
}


def _emit(result: RunResult, args) -> None:
    paths = write_result(result, args.out_dir, args.format)
    print(f"wrote {paths['data']}")
    print(f"wrote {paths['summary']}")
    summary = {k: v for k, v in result.summary.items() if v is not None}
    if summary:
        print(json.dumps(summary, default=float))


def _selftest() -> bool:
    from .dsp_demod import DemodConfig, IQSampleStream, digital_mix
    from .fidelity_budget import (
        BiasBudget,
        SpuriousDriveSpec,
        bias_precision,
        jitter_for_fidelity,
        worst_case_spurious_fidelity,
    )
    from .orchestrator import demod_equivalence
    from .timing_fabric import LatencyLedger, feedback_latency

    checks = []
    agree, total = demod_equivalence(500, 1024, 0)
    checks.append(("fs/4 fast path equals general path", agree == total))
    i, q = digital_mix(IQSampleStream([100] * 4, [0] * 4), DemodConfig())
    checks.append(("fs/4 worked example",
                   list(zip(i.tolist(), q.tolist())) == [(100, 0), (0, -100), (-100, 0), (0, 100)]))
    checks.append(("jitter for F = 0.99999 at 100 MHz ~ 6.2 ps",
                   abs(jitter_for_fidelity(0.99999, 100e6) * 1e12 - 6.2) < 0.05))
    checks.append(("bias precision ~ 10.34 uV",
                   abs(bias_precision(BiasBudget()) * 1e6 - 10.34) < 0.01))
    f, _ = worst_case_spurious_fidelity(SpuriousDriveSpec.from_sfdr(-40))
    checks.append(("worst-case spurious fidelity at -40 dBc", 0.99997 <= f <= 0.999995))
    fb = feedback_latency(LatencyLedger.default())
    checks.append(("electronic feedback latency 125 ns", fb.electronics_ps == 125_000))
    res = run({"experiment": "feedback_latency", "seed": 0})
    checks.append(("loopback timeline matches ledger", res.summary["tau_fb_ps"] == fb.total_ps))
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return all(ok for _, ok in checks)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = validate_config(args.config)
            print(json.dumps(cfg, indent=2, sort_keys=True, default=float))
            return EXIT_OK
        if args.command == "run":
            cfg = validate_config(args.config)
            _emit(run(cfg, seed=args.seed), args)
            return EXIT_OK
        if args.command == "budget":
            values = args.sweep or args.values or _BUDGET_DEFAULTS[args.kind]
            cfg = {"experiment": "budget_sweep", "seed": args.seed or 0,
                   "budget": {"kind": args.kind, "values": values}}
            _emit(run(cfg), args)
            return EXIT_OK
        if args.command == "selftest":
            return EXIT_OK if _selftest() else EXIT_RUNTIME
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # runtime failures map to exit code 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
