"""The ``pdspec`` command: one subcommand per module plus the full report.

Exit codes are 0 on success, 1 when an audit records a failure and 2 on usage
errors.  Every option may also come from ``--config FILE``, a flat ``key = value``
file whose keys are the option names; options on the command line win.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from . import __version__
from . import bounds, growth, spectrum, substitution, transfer, transport
from .transfer import PotentialMap

EXIT_OK, EXIT_AUDIT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- deterministic output ----------------------------------------------------

def format_float(x: float) -> str:
    """17 significant digits, the shortest width that round-trips any double."""
    return format(float(x), ".17g")


def to_json(obj) -> str:
    """Compact JSON with sorted keys and 17-digit floats; non-finite floats become null."""
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ",".join(f"{json.dumps(k)}:{to_json(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(to_json(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj) if math.isfinite(obj) else "null"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def csv_row(*values) -> str:
    return ",".join(format_float(v) if isinstance(v, (float, np.floating)) else str(v)
                    for v in values)


# --- configuration -------------------------------------------------------------

def parse_power(text: str) -> int:
    """Integers written plainly or as ``b^e``, e.g. ``2^15``."""
    if "^" in text:
        b, e = text.split("^", 1)
        return int(b) ** int(e)
    return int(text)


def read_config(path: str) -> dict[str, str]:
    """``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


@dataclass
class RunConfig:
    """Everything the full report depends on."""

    value_a: float = -4.0
    value_b: float = 1.0
    level: int = 10
    bound: float = 2.0
    n_max: int = 20
    audit_count: int = 20
    grid: int = 4096
    edge_tol: float = 1e-10
    C: float | None = None
    bounds_n_max: int = 6
    k_max: int = 8
    prefix_m: int = 4096
    growth_n_max: int = 10
    m_max: int = 15
    corollary_from: int = 9
    lower_from: int = 9
    nic_count: int = 8
    half_width: int = 1024
    p: float = 2.0
    t_min: float = 1.0
    t_max: float = 1000.0
    per_decade: int = 16
    measure_levels: tuple[int, ...] = (4, 10)
    output_format: str = "json"

    def __post_init__(self):
        if self.level < 1:
            raise UsageError("level must be at least 1")
        for name in ("bound", "edge_tol", "t_min", "t_max", "p"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.output_format not in ("csv", "json"):
            raise UsageError("output_format must be csv or json")
        if self.value_a == self.value_b:
            raise UsageError("value_a and value_b must differ")

    @property
    def potential(self) -> PotentialMap:
        return PotentialMap(self.value_a, self.value_b)

    def digest(self) -> str:
        return hashlib.sha256(to_json(asdict(self)).encode()).hexdigest()


# --- report pipeline -------------------------------------------------------------

@dataclass
class ReportBundle:
    spectrum_estimate: dict = field(default_factory=dict)
    constants_ledger: dict = field(default_factory=dict)
    lemma_results: dict = field(default_factory=dict)
    growth: dict = field(default_factory=dict)
    transport: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return to_json(self.as_dict())

    @property
    def ok(self) -> bool:
        return not self.failures


def _stage(bundle: ReportBundle, name: str, fn: Callable[[], None]) -> bool:
    try:
        fn()
        return True
    except Exception as exc:  # a failed stage leaves a marker, later stages may go on
        bundle.failures.append(f"{name}: {type(exc).__name__}: {exc}")
        return False


def _tallies_failed(bundle: ReportBundle, section: str, tallies: dict, skip=()) -> None:
    for k, v in tallies.items():
        if k not in skip and v["fail"]:
            bundle.failures.append(f"{section}.{k}: {v['fail']} failures")


def full_report(config: RunConfig) -> ReportBundle:
    """Spectrum, constants, scale audits, norm growth and transport in one bundle."""
    pot = config.potential
    b = ReportBundle(provenance={"config_hash": config.digest(), "version": __version__,
                                 "config": asdict(config)})
    st: dict = {}

    def do_spectrum():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", spectrum.CoarseGridWarning)
            est = spectrum.estimate_spectrum(config.level, config.bound, config.n_max,
                                             config.audit_count, pot, config.grid,
                                             config.edge_tol)
            measures = {str(lv): spectrum.band_measure(
                spectrum.approximate_bands(lv, config.bound, pot=pot, edge_tol=config.edge_tol))
                for lv in config.measure_levels}
            c_all = spectrum.estimate_trace_bound(est.bands, config.n_max, pot=pot)
        st["est"] = est
        b.spectrum_estimate = {
            "level": config.level, "bound": config.bound, "n_max": est.n_max,
            "band_count": len(est.bands), "total_measure": est.total_measure,
            "band_measure": measures, "C_emp": est.C_emp, "C_all_centres": c_all,
            "audit_energies": [float(e) for e in est.samples],
        }

    def do_ledger():
        C = config.C if config.C is not None else st["est"].C_emp
        ledger = bounds.constants_from_C(C, bounds.norm_suprema(st["est"].samples, pot))
        st["ledger"] = ledger
        b.constants_ledger = ledger.as_dict()

    def do_bounds():
        t = bounds.audit(st["est"].samples, st["ledger"], config.bounds_n_max, config.k_max,
                         pot, config.prefix_m)
        b.lemma_results = {k: v.as_dict() for k, v in t.items()}
        _tallies_failed(b, "lemma_results", b.lemma_results)

    def do_growth():
        E, ledger = st["est"].samples, st["ledger"]
        nics = transfer.nic_circle(config.nic_count)
        aud = growth.audit(E, nics, ledger, pot, config.growth_n_max, config.m_max,
                           config.corollary_from, config.lower_from).as_dict()
        per_energy, g1s, g2s = [], [], []
        L = growth.dyadic_grid(config.m_max)
        for e in E:
            profs = [growth.norm_profile(float(e), nic, L, pot, (8.0, L[-1])) for nic in nics]
            g1 = min(p.gamma1_emp for p in profs)
            g2 = max(p.gamma2_emp for p in profs)
            g1s.append(g1)
            g2s.append(g2)
            per_energy.append({"energy": float(e), "gamma1_emp": g1, "gamma2_emp": g2,
                               "alpha_emp": growth.alpha_from_gammas(g1, g2)})
        b.growth = {"audits": aud, "per_energy": per_energy,
                    "gamma1_emp": min(g1s), "gamma2_emp": max(g2s),
                    "alpha_emp": growth.alpha_from_gammas(min(g1s), max(g2s)),
                    "alpha": ledger.alpha, "lower_from": config.lower_from}
        # lower_all holds only for large L; it is reported, not enforced
        _tallies_failed(b, "growth.audits", aud, skip=("lower_all",))

    def do_transport():
        window = substitution.fixed_point_window(-config.half_width, 2 * config.half_width + 1)
        H = transport.build_hamiltonian(window, pot)
        ts = transport.t_grid(config.t_min, config.t_max, config.per_decade)
        ser = transport.moment_series(H, config.p, ts)
        verdict = transport.compare_guarneri(ser.beta_minus, st["ledger"].alpha)
        b.transport = {"p": ser.p, "half_width": config.half_width,
                       "samples": [list(s) for s in ser.samples],
                       "beta_minus": ser.beta_minus, "beta_plus": ser.beta_plus,
                       "boundary_flag": ser.boundary_flag, "t_cap": ser.t_cap,
                       "alpha_ref": st["ledger"].alpha, "comparison": verdict}
        if not math.isfinite(ser.beta_minus):
            b.failures.append("transport: t range too short before the boundary guard tripped")
        elif not verdict["pass"]:
            b.failures.append("transport: beta_minus proxy below alpha")

    if _stage(b, "spectrum", do_spectrum) and _stage(b, "ledger", do_ledger):
        _stage(b, "bounds", do_bounds)
        _stage(b, "growth", do_growth)
        _stage(b, "transport", do_transport)
    return b


# --- subcommands ---------------------------------------------------------------------

def _pot(args) -> PotentialMap:
    if getattr(args, "free", False):
        return PotentialMap.constant(0.0)
    if args.value_a == args.value_b:
        raise UsageError("value-a and value-b must differ (use --free for V = 0)")
    return PotentialMap(args.value_a, args.value_b)


def _ledger_for(args, pot: PotentialMap):
    est = spectrum.estimate_spectrum(args.level, 2.0, args.n_max, args.audit_count, pot)
    C = args.C if args.C is not None else est.C_emp
    return est, bounds.constants_from_C(C, bounds.norm_suprema(est.samples, pot))


def cmd_seq(args, out) -> int:
    w = substitution.fixed_point_window(args.start, args.len)
    if args.shift:
        w = substitution.shift_window(w, args.shift)
    blocks = None
    if args.partition is not None:
        try:
            blocks = substitution.n_partition(w, args.partition)
        except substitution.AlignmentError as exc:
            raise UsageError(str(exc)) from exc
    if args.format == "json":
        doc = {"start": w.start + w.shift, "letters": w.letters}
        if blocks is not None:
            doc["partition"] = [{"label": bl.label, "offset": bl.offset} for bl in blocks]
        print(to_json(doc), file=out)
    else:
        print(w.letters, file=out)
        if blocks is not None:
            print(" ".join(f"{bl.label}@{bl.offset}" for bl in blocks), file=out)
    return EXIT_OK


def cmd_traces(args, out) -> int:
    table = transfer.BlockTransfers(args.energy, _pot(args))
    for n in range(args.nmax + 1):
        m = table[n]
        print(csv_row(n, float(m.trace()), float(table.b_block(n).trace()),
                      float(m.scale_log)), file=out)
    return EXIT_OK


def cmd_bands(args, out) -> int:
    pot = _pot(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spectrum.CoarseGridWarning)
        bands = spectrum.approximate_bands(args.level, args.bound, pot=pot)
    if not args.json:
        for bd in bands:
            print(csv_row(bd.lo, bd.hi, bd.level), file=out)
        return EXIT_OK
    est = spectrum.estimate_spectrum(args.level, args.bound, args.n_max, args.audit_count, pot)
    print(to_json({"bands": [{"lo": bd.lo, "hi": bd.hi, "level": bd.level} for bd in bands],
                   "total_measure": spectrum.band_measure(bands), "C_emp": est.C_emp}),
          file=out)
    return EXIT_OK


def cmd_bounds_audit(args, out) -> int:
    pot = _pot(args)
    est, ledger = _ledger_for(args, pot)
    t = bounds.audit(est.samples, ledger, args.nmax, args.kmax, pot)
    results = {k: v.as_dict() for k, v in t.items()}
    print(to_json({"C_emp": est.C_emp, "ledger": ledger.as_dict(),
                   "lemma_results": results}), file=out)
    return EXIT_AUDIT if any(v["fail"] for v in results.values()) else EXIT_OK


def cmd_growth(args, out) -> int:
    pot = _pot(args)
    nics = transfer.nic_circle(8)
    if not 0 <= args.nic_index < len(nics):
        raise UsageError("nic-index must be in 0..7")
    m_max = int(round(math.log2(args.lmax)))
    if 2**m_max != args.lmax:
        raise UsageError("lmax must be a power of 2")
    L = growth.dyadic_grid(m_max)
    try:
        prof = growth.norm_profile(args.energy, nics[args.nic_index], L, pot, (8.0, L[-1]))
    except (ValueError, OverflowError) as exc:
        raise UsageError(str(exc)) from exc
    _, ledger = _ledger_for(args, pot)
    for Lv, v in prof.samples:
        print(csv_row(Lv, v), file=out)
    print(to_json({"gamma1_emp": prof.gamma1_emp, "gamma2_emp": prof.gamma2_emp,
                   "alpha_emp": prof.alpha_emp, "ledger_alpha": ledger.alpha}), file=out)
    return EXIT_OK


def cmd_transport(args, out) -> int:
    pot = _pot(args)
    window = substitution.fixed_point_window(-args.half_width, 2 * args.half_width + 1)
    H = transport.build_hamiltonian(window, pot)
    ser = transport.moment_series(H, args.p, transport.t_grid(args.tmin, args.tmax, 16))
    # the zero potential has no scale ledger of its own; compare with the default one
    _, ledger = _ledger_for(args, transfer.DEFAULT_POTENTIAL if args.free else pot)
    for t, m in ser.samples:
        print(csv_row(t, m), file=out)
    print(to_json({"beta_minus": ser.beta_minus, "beta_plus": ser.beta_plus,
                   "boundary_flag": ser.boundary_flag, "alpha_ref": ledger.alpha}), file=out)
    return EXIT_OK


def cmd_report(args, out) -> int:
    names = {f.name for f in fields(RunConfig)}
    kw = {k: v for k, v in vars(args).items() if k in names and v is not None}
    cfg = RunConfig(**kw)
    bundle = full_report(cfg)
    text = bundle.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=out)
    return EXIT_OK if bundle.ok else EXIT_AUDIT


# --- parser ----------------------------------------------------------------------------

def _add_potential(p: argparse.ArgumentParser, free: bool = False) -> None:
    p.add_argument("--value-a", type=float, default=-4.0)
    p.add_argument("--value-b", type=float, default=1.0)
    if free:
        p.add_argument("--free", action="store_true", help="zero potential")


def _add_ledger(p: argparse.ArgumentParser) -> None:
    p.add_argument("--level", type=int, default=10, help="band level for audit energies")
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--audit-count", type=int, default=20)
    p.add_argument("--C", type=float, default=None, help="trace bound (default: C_emp)")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdspec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pdspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("seq", help="letters of the two-sided fixed point")
    p.add_argument("--start", type=int, required=True)
    p.add_argument("--len", type=int, required=True)
    p.add_argument("--shift", type=int, default=0)
    p.add_argument("--partition", type=int, default=None)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_seq)

    p = sub.add_parser("traces", help="trace orbit as CSV (n, x_n, y_n, scale_log)")
    p.add_argument("--energy", type=float, required=True)
    p.add_argument("--nmax", type=int, default=20)
    _add_potential(p, free=True)
    p.set_defaults(func=cmd_traces)

    p = sub.add_parser("bands", help="band approximants as CSV (lo, hi, level)")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--bound", type=float, default=2.0)
    p.add_argument("--json", action="store_true")
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--audit-count", type=int, default=20)
    _add_potential(p)
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("bounds-audit", help="scale-propagation audit as JSON")
    _add_ledger(p)
    p.add_argument("--kmax", type=int, default=8)
    p.add_argument("--nmax", type=int, default=6)
    _add_potential(p)
    p.set_defaults(func=cmd_bounds_audit)

    p = sub.add_parser("growth", help="truncated norms as CSV (L, norm) plus a JSON summary")
    p.add_argument("--energy", type=float, required=True)
    p.add_argument("--lmax", type=parse_power, default=2**15)
    p.add_argument("--nic-index", type=int, default=0)
    _add_ledger(p)
    _add_potential(p)
    p.set_defaults(func=cmd_growth)

    p = sub.add_parser("transport", help="averaged moments as CSV (t, moment) plus JSON")
    p.add_argument("--half-width", type=int, default=1024)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--tmin", type=float, default=1.0)
    p.add_argument("--tmax", type=float, default=1000.0)
    _add_ledger(p)
    _add_potential(p, free=True)
    p.set_defaults(func=cmd_transport)

    p = sub.add_parser("report", help="full pipeline as one JSON bundle")
    for f in fields(RunConfig):
        if f.name in ("measure_levels", "output_format"):
            continue
        kind = {"int": int, "float": float}.get(str(f.type).split(" ")[0], float)
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None)
    p.add_argument("--out", default=None, help="write the JSON here instead of stdout")
    p.set_defaults(func=cmd_report)

    for p in sub.choices.values():
        p.add_argument("--config", default=None, help="flat key = value file of options")
    return parser


def _scan(argv: list[str]) -> tuple[str | None, str | None]:
    """Subcommand name and ``--config`` path, found before full parsing."""
    command = next((a for a in argv if not a.startswith("-")), None)
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    return command, path


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    command, path = _scan(argv)
    subs = parser._subparsers._group_actions[0].choices
    if path and command in subs:
        sub = subs[command]
        dests = {a.dest: a for a in sub._actions}
        values = read_config(path)
        unknown = sorted(set(values) - set(dests) - {"config"})
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        defaults = {}
        for k, v in values.items():
            act = dests[k]
            if act.nargs == 0:  # on/off flags
                defaults[k] = v.lower() in ("1", "true", "yes", "on")
            else:
                defaults[k] = act.type(v) if act.type else v
            act.required = False  # a value from the file satisfies a required option
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        try:
            args = _apply_config(parser, argv)
        except SystemExit as exc:  # --help and --version
            return EXIT_OK if not exc.code else EXIT_USAGE
        return args.func(args, out)
    except (UsageError, OSError) as exc:
        print(f"pdspec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except bounds.DomainError as exc:
        print(f"pdspec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
