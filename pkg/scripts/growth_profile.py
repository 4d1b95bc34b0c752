"""Tabulate ||u||_L on dyadic L at the audit energies, one CSV row per (E, NIC, L).

Usage: python3 scripts/growth_profile.py [AUDIT_COUNT]
"""
import sys

from pdspec import growth, spectrum, transfer


def main(argv: list[str]) -> int:
    count = int(argv[0]) if argv else 5
    est = spectrum.estimate_spectrum(audit_count=count)
    print("energy,nic,L,norm")
    for E in est.samples:
        for k, nic in enumerate(transfer.nic_circle(8)):
            for L, norm in growth.norm_profile(float(E), nic).samples:
                print(f"{float(E)!r},{k},{L:g},{norm!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
