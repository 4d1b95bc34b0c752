"""Write the full report bundle to a JSON file.

Usage: python3 scripts/run_report.py [OUT.json] [key=value ...]

Each ``key=value`` pair overrides a ``RunConfig`` field, e.g. ``level=8``.
"""
import sys

from pdspec.cli import RunConfig, full_report


def main(argv: list[str]) -> int:
    out = argv.pop(0) if argv and "=" not in argv[0] else "report.json"
    defaults = RunConfig()
    overrides = {}
    for item in argv:
        key, value = item.split("=", 1)
        current = getattr(defaults, key)
        overrides[key] = value if isinstance(current, str) else (
            int(value) if isinstance(current, int) else float(value))
    bundle = full_report(RunConfig(**overrides))
    with open(out, "w") as fh:
        fh.write(bundle.to_json() + "\n")
    for line in bundle.failures:
        print(f"failure: {line}", file=sys.stderr)
    print(f"wrote {out}")
    return 0 if bundle.ok else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
