"""Print band count, measure and trace bound of the default potential per level.

Usage: python3 scripts/band_scan.py [MAX_LEVEL]
"""
import sys

from pdspec import spectrum


def main(argv: list[str]) -> int:
    top = int(argv[0]) if argv else 10
    print("level,bands,measure,C_emp")
    for level in range(1, top + 1):
        est = spectrum.estimate_spectrum(level=level)
        print(f"{level},{len(est.bands)},{est.total_measure:.6f},{est.C_emp:.6g}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
