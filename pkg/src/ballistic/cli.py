"""Command-line entry point: ``ballistic run | verify | sweep``.

Exit codes: 0 success, 1 assertion failure, 2 configuration/usage error,
3 numerical abort (norm drift).
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .config import ConfigError, load_config

BUNDLED_SUFFIX = ".cfg"


def bundled_configs():
    return sorted(p.name for p in resources.files("ballistic").joinpath("configs").iterdir()
                  if p.name.endswith(BUNDLED_SUFFIX))


def resolve_config(name: str) -> Path:
    """A path on disk, or the name of a bundled config (with or without ``.cfg``)."""
    p = Path(name)
    if p.exists():
        return p
    stem = name if name.endswith(BUNDLED_SUFFIX) else name + BUNDLED_SUFFIX
    cand = resources.files("ballistic").joinpath("configs", stem)
    if cand.is_file():
        return Path(str(cand))
    raise ConfigError(f"no such config file, and not a bundled config ({', '.join(bundled_configs())})",
                      source=name)


def _parse_values(text: str):
    vals = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            vals.append(float(item))
        except ValueError:
            raise ConfigError(f"sweep value {item!r} is not a number", field="--values") from None
    return vals


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def cmd_run(args) -> int:
    from .experiment import resolve_out_dir, run_experiment

    cfg = load_config(resolve_config(args.config))
    out = resolve_out_dir(cfg, args.out)
    res = run_experiment(cfg, out, log=_log)
    print(json.dumps({"exit_code": res.exit_code, "out_dir": str(res.out_dir), "config_hash": res.config_hash,
                      "summary": res.summary}, indent=2, sort_keys=True, default=str))
    if res.failures:
        print("failures:", json.dumps(res.failures, sort_keys=True, default=str))
    if res.error:
        _log(res.error)
    return res.exit_code


def cmd_verify(args) -> int:
    from .verify import run_suite

    checks = run_suite(args.suite)
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return 1 if failed else 0


def cmd_sweep(args) -> int:
    from .experiment import resolve_out_dir, run_sweep

    values = _parse_values(args.values)
    cfg = load_config(resolve_config(args.config))
    out = resolve_out_dir(cfg, args.out)
    rows = run_sweep(cfg, args.axis, values, out, workers=args.workers, log=_log)
    for r in rows:
        print(json.dumps(r, sort_keys=True, default=str))
    print(f"wrote {out / 'sweep.csv'}")
    return 0 if all(r["exit_code"] == 0 for r in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    from .experiment import AXES
    from .verify import SUITES

    p = argparse.ArgumentParser(prog="ballistic", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config", help="config path or bundled config name")
    r.add_argument("--out", help="output directory (default: [output] dir, then $BALLISTIC_OUT/<name>)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run an invariant suite")
    v.add_argument("suite", choices=SUITES + ("all",))
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="run a config across a parameter grid")
    s.add_argument("config")
    s.add_argument("--axis", required=True, choices=AXES)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc.describe()}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
