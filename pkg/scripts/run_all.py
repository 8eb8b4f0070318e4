"""Run every manifest in ``scripts/manifests`` and print one status line each.

Usage: ``python3 scripts/run_all.py [--out DIR] [--jobs N] [names ...]``

Each manifest writes its CSV tables and ``report.json`` to ``DIR/<name>``.
``example4_bad_theta`` is expected to fail (it demonstrates the reported
window violation); every other manifest is expected to pass.
"""

import argparse
import sys
import time
from pathlib import Path

from blowup_lab import cli

HERE = Path(__file__).resolve().parent
EXPECTED_FAIL = {"example4_bad_theta"}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="manifest stems (default: all)")
    ap.add_argument("--out", default="out", help="parent output directory")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)
    paths = sorted((HERE / "manifests").glob("*.json"))
    if args.names:
        paths = [p for p in paths if p.stem in args.names]
    unexpected = 0
    for path in paths:
        m = cli.ExperimentManifest.load(path)
        t0 = time.perf_counter()
        rep, out = cli.run_manifest(m, Path(args.out) / path.stem, args.jobs)
        fails = rep.failures()
        ok = not fails
        expected = ok != (path.stem in EXPECTED_FAIL)
        unexpected += not expected
        status = ("pass" if ok else "fail") + ("" if expected else " (UNEXPECTED)")
        print(f"{path.stem:24s} {status:18s} {len(rep.checks) - len(fails)}/{len(rep.checks)} checks "
              f"{time.perf_counter() - t0:7.1f} s  -> {out}")
    return 1 if unexpected else 0


if __name__ == "__main__":
    sys.exit(main())
