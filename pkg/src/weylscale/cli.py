"""``weylscale <check|disks|mfun|resolve> --config <path> [--out DIR] [--seed N] [--threads N]``.

Exit codes: 0 success, 1 a hard check failed, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import runner
from .config import parse_config
from .errors import ConfigError, WeylScaleError

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("check", "disks", "mfun", "resolve")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weylscale", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--out", default=None, help="output directory (default: config 'output' or ./out)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads over lambda")
    return p


def run(command: str, config_path, out=None, seed=None, threads: int = 1, stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    try:
        cfg = parse_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out or cfg.output or "out") / cfg.name
    seed = cfg.seed if seed is None else seed
    try:
        ctx = runner.prepare(cfg, seed)
        if command == "check":
            results = runner.run_checks(ctx, threads)
            rows = runner.check_rows(results)
            failed = [r for r in results if r.asserted and not r.passed]
            summary = {"checks": len(results), "failed": len(failed),
                       "failed_names": sorted({r.name for r in failed})}
            for r in results:
                mark = "ok " if r.passed else "FAIL"
                lam = "" if r.lam is None else f" lam={r.lam:.6g}"
                kind = "" if r.asserted else " (reported)"
                print(f"[{mark}] {cfg.name} {r.name}{lam}: {r.value:.3e}{kind}", file=stream)
        elif command == "disks":
            rows = runner.disk_rows(ctx, threads)
            summary = {"rows": len(rows), "lambdas": len(cfg.lambdas)}
            failed = []
        elif command == "mfun":
            rows = runner.mfun_rows(ctx, threads)
            summary = {"rows": len(rows), "max_cauchy_gap": max(r["cauchy_gap"] for r in rows)}
            failed = []
            for r in rows:
                print(f"{cfg.name} lam={complex(r['lam_re'], r['lam_im']):.6g} "
                      f"gap={r['cauchy_gap']:.3e}", file=stream)
        else:
            rows = runner.resolve_rows(ctx, threads)
            summary = {"rows": len(rows),
                       "max_residual": max((r["residual_max"] for r in rows), default=0.0),
                       "min_ineq1_slack": min((r["ineq1_slack"] for r in rows), default=0.0)}
            failed = []
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WeylScaleError as exc:
        print(f"numeric failure in scenario {cfg.name!r}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERIC
    runner.write_csv(out_dir / f"{command}.csv", rows)
    runner.write_manifest(out_dir / f"{command}_manifest.json", ctx, command, summary, seed)
    return EXIT_ASSERT if failed else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
