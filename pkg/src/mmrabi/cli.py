"""Command line: ``mmrabi <scenario> [--key=value ...] [--config=PATH] [--out=DIR]``.

Exit codes: 0 success, 1 other package errors, 2 parse/parameter errors,
3 resource errors, 4 convergence errors, 5 precision errors.
"""
from __future__ import annotations

import logging
import sys

from .config import SCENARIOS, parse_config, schema_text
from .errors import MMRabiError

USAGE = (
    "usage: mmrabi <scenario> [--key=value ...] [--config=PATH] [--out=DIR]\n"
    f"scenarios: {', '.join(SCENARIOS)}\n"
    "worker count: MMRABI_WORKERS (default 1)\n"
)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help", "help"):
        print(USAGE + "\noptions:\n" + schema_text())
        return 0
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    scenario, flags = argv[0], argv[1:]
    from .scenarios import run

    try:
        spec = parse_config(scenario, flags)
        manifest = run(spec)
    except MMRabiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"{scenario}: wrote {len(manifest.outputs)} files to {spec.out_dir} "
          f"in {manifest.wall_time:.1f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
