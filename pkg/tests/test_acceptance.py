"""Acceptance gate: one test per criterion, each logging a pass/fail line.

The lines are collected into an "acceptance criteria" section at the end of
the pytest run.
"""
import math
import time
import warnings

import numpy as np
import pytest

from pdspec import bounds, growth, spectrum, substitution, transfer, transport
from pdspec.cli import RunConfig, full_report

import oracles


def record(log, key, ok, detail):
    line = f"criterion {key}: {'PASS' if ok else 'FAIL'} | {detail}"
    log[key] = line
    print(line)
    return ok


@pytest.fixture(scope="module")
def estimate50():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spectrum.CoarseGridWarning)
        return spectrum.estimate_spectrum(audit_count=50)


@pytest.fixture(scope="module")
def growth_audit(audit_energies, ledger):
    return growth.audit(audit_energies, transfer.nic_circle(8), ledger,
                        n_max=10, m_max=15, corollary_from=9)


# --- 1 and 2: transfer recursions and unit determinants -----------------------------------------

@pytest.fixture(scope="module")
def recursion_run():
    t0 = time.perf_counter()
    E = np.linspace(-8, 8, 100)
    block_err, prefix_err, det_res = 0.0, 0.0, 0.0
    for n in range(15):
        mants, logs = oracles.scaled_word_product(E, substitution.block_word("a", n), -4.0, 1.0)
        b = transfer.block_transfer(E, n)
        block_err = max(block_err, oracles.scaled_rel_diff(
            b.entries, b.scale_log, mants[-1], logs[-1]).max())
        det_res = max(det_res, b.det_residual().max())
    mants, logs = oracles.scaled_word_product(E, oracles.two_sided(0, 4096), -4.0, 1.0)
    table = transfer.BlockTransfers(E)
    for m in range(1, 4097):
        p = transfer.prefix_transfer(E, m, table=table)
        prefix_err = max(prefix_err, oracles.scaled_rel_diff(
            p.entries, p.scale_log, mants[m - 1], logs[m - 1]).max())
        det_res = max(det_res, p.det_residual().max())
    return block_err, prefix_err, det_res, time.perf_counter() - t0


def test_criterion_01_transfer_oracles(acceptance_log, recursion_run):
    block_err, prefix_err, _, secs = recursion_run
    ok = block_err <= 1e-8 and prefix_err <= 1e-8 and secs < 60
    record(acceptance_log, "01", ok,
           f"block vs letters {block_err:.2e}, prefix vs letters {prefix_err:.2e} "
           f"(tol 1e-8, n<=14, m<=4096, 100 energies), {secs:.1f}s (<60s)")
    assert ok


def test_criterion_02_conservation(acceptance_log, recursion_run):
    det_res = recursion_run[2]
    H = transport.build_hamiltonian(substitution.fixed_point_window(-256, 513))
    sums = [abs(transport.averaged_probabilities(H, t).sum() - 1)
            for t in (0.1, 1.0, 10.0, 100.0, 1e3, 1e4)]
    ok = det_res <= 1e-9 and max(sums) <= 1e-9
    record(acceptance_log, "02", ok,
           f"max det residual {det_res:.2e} (tol 1e-9), probability sum error "
           f"{max(sums):.2e} at N=256 (tol 1e-9)")
    assert ok


# --- 3: combinatorics ----------------------------------------------------------------------------

def test_criterion_03_combinatorics(acceptance_log):
    agree = all(substitution.check_block_agreement(n) for n in range(1, 13))
    isolated = all(substitution.check_partition_structure(substitution.fixed_point_window(s, 2**16), n)
                   for n in range(1, 15) for s in (0, -2**15, -2**16))
    certs = True
    for m in range(1, 4097):
        exps = substitution.prefix_block_decomposition(m, certify=True)
        certs &= "".join(substitution.block_word("a", e) for e in reversed(exps)) \
            == oracles.two_sided(0, m)
    ok = agree and isolated and certs
    record(acceptance_log, "03", ok,
           f"block agreement n<=12 {agree}, isolated b-blocks on 2^16 windows {isolated}, "
           f"prefix certificates m<=4096 {certs}")
    assert ok


# --- 4: trace identities -------------------------------------------------------------------------

def test_criterion_04_trace_identities(acceptance_log, estimate50):
    E = np.asarray(estimate50.samples)
    t = transfer.BlockTransfers(E)
    y_err, m_err = 0.0, 0.0
    for n in range(1, 21):
        y = (t[n - 1] @ t[n - 1]).trace()
        x = t[n - 1].trace()
        y_err = max(y_err, (np.abs(y - (x**2 - 2))
                            / np.maximum(np.maximum(np.abs(y), np.abs(x**2 - 2)), 1e-12)).max())
        if n < 20:
            lhs = t[n + 1].unscaled()
            rhs = x[:, None, None] * (t[n - 1] @ t[n]).unscaled() - t[n].unscaled()
            scale = np.maximum(np.abs(lhs).max(axis=(1, 2)), np.abs(rhs).max(axis=(1, 2)))
            m_err = max(m_err, (np.abs(lhs - rhs).max(axis=(1, 2)) / np.maximum(scale, 1e-12)).max())
    ok = len(E) == 50 and y_err <= 1e-9 and m_err <= 1e-8
    record(acceptance_log, "04", ok,
           f"y_n = x_(n-1)^2 - 2 rel err {y_err:.2e} (tol 1e-9), "
           f"M_(n+1) identity rel err {m_err:.2e} (tol 1e-8), n<=20, {len(E)} energies")
    assert ok


# --- 5: bounded traces on band midpoints ------------------------------------------------------------

def test_criterion_05_trace_bound(acceptance_log, estimate):
    mids = np.array([b.mid for b in estimate.bands])
    t = transfer.BlockTransfers(mids)
    lx = np.stack([t[n].log_abs_trace() for n in range(21)]).max(axis=0)
    finite = bool(np.all(np.isfinite(lx)))
    escaped = int(np.sum(lx > math.log(transfer.TRACE_OVERFLOW)))
    o = transfer.trace_orbit(10.0, 15)
    esc_at = next((n for n in range(16) if o.log_abs_xs[n] > math.log(1e6)), None)
    ok = finite and esc_at is not None and esc_at <= 15
    record(acceptance_log, "05", ok,
           f"max_(n<=20) |x_n| finite at all {len(mids)} level-10 midpoints ({finite}; "
           f"{escaped} pass 1e150), C_emp = {estimate.C_emp:.6g}, "
           f"E=10 passes 1e6 at n={esc_at}")
    assert ok


# --- 6: scale-propagation bounds -----------------------------------------------------------------------

def test_criterion_06_bounds_audit(acceptance_log, audit_energies, ledger):
    tallies = bounds.audit(audit_energies, ledger, n_max=6, k_max=8)
    fails = {k: v.failed for k, v in tallies.items() if v.failed}
    total = sum(v.passed for v in tallies.values())
    ok = not fails and ledger.K == ledger.C**2 + 2 * ledger.C + 1
    record(acceptance_log, "06", ok,
           f"{total} checks over n<=6, k<=8, {len(audit_energies)} energies, "
           f"K = {ledger.K:.6g}, failures {fails or 0}")
    assert ok


# --- 7: lower-bound chain -----------------------------------------------------------------------------

def test_criterion_07_lower_chain(acceptance_log, growth_audit, ledger):
    three, cor = growth_audit.three_scale, growth_audit.corollary
    ok = three.failed == 0 and cor.failed == 0 and three.passed == 10 * 8 * 20
    record(acceptance_log, "07", ok,
           f"three-scale D={ledger.D:.8f}: {three.passed} pass / {three.failed} fail; "
           f"corollary 2^9..2^15: {cor.passed} pass / {cor.failed} fail")
    assert ok


# --- 8: two-sided envelope ------------------------------------------------------------------------

def test_criterion_08_upper_envelope_and_exponents(acceptance_log, growth_audit, audit_energies):
    up = growth_audit.upper
    g1s, g2s = [], []
    L = growth.dyadic_grid(15)
    for E in audit_energies:
        for nic in transfer.nic_circle(8):
            p = growth.norm_profile(float(E), nic, L)
            g1s.append(p.gamma1_emp)
            g2s.append(p.gamma2_emp)
    g1, g2 = min(g1s), max(g2s)
    alpha_emp = growth.alpha_from_gammas(g1, g2)
    ok = up.failed == 0 and 0 < g1 <= g2 and 0 < alpha_emp <= 1
    record(acceptance_log, "08a", ok,
           f"upper ||u||_L <= L^gamma2: {up.passed} pass / {up.failed} fail; "
           f"gamma1_emp {g1:.4g} <= gamma2_emp {g2:.4g}, alpha_emp {alpha_emp:.4g}")
    assert ok


def test_criterion_08_lower_envelope_large_L(acceptance_log, growth_audit):
    low = growth_audit.lower
    ok = low.failed == 0
    record(acceptance_log, "08b", ok,
           f"lower (1/sqrt2) L^gamma1 <= ||u||_L for 2^9 <= L <= 2^15: "
           f"{low.passed} pass / {low.failed} fail")
    assert ok


@pytest.mark.xfail(strict=True, reason="at L = 1 the NIC with u(1) = 0 has ||u||_1 = 0; "
                                       "the lower envelope only holds for large L")
def test_criterion_08_lower_envelope_all_dyadic(acceptance_log, growth_audit, ledger,
                                                audit_energies):
    low = growth_audit.lower_all
    u = transfer.solution_values(audit_energies, transfer.nic_circle(8), 2**15 + 1)
    L = growth.dyadic_grid(15)
    with np.errstate(divide="ignore"):
        below = [int(x) for x in L
                 if np.any(growth.u_norms(u, x) < ledger.C1 * x**ledger.gamma1)]
    ok = low.failed == 0
    record(acceptance_log, "08c", ok,
           f"lower envelope at every dyadic L <= 2^15: {low.passed} pass / {low.failed} fail, "
           f"violated at L in {below}")
    assert ok


# --- 9: transport -----------------------------------------------------------------------------------

def test_criterion_09_transport(acceptance_log, timed_default_series, ledger):
    default_series, default_secs = timed_default_series
    t0 = time.perf_counter()
    free = transport.moment_series(transport.free_hamiltonian(1024), 2, transport.t_grid(1, 1e3))
    H = transport.build_hamiltonian(substitution.fixed_point_window(-256, 513))
    quad = {t: abs(transport.averaged_moment(H, 2, t)
                   / oracles.laplace_moment_quadrature(H.diagonal, 2, t) - 1)
            for t in (10.0, 100.0)}
    secs = time.perf_counter() - t0 + default_secs
    verdict = transport.compare_guarneri(default_series.beta_minus, ledger.alpha)
    free_ok = abs(free.beta_minus - 1) <= 0.1 and abs(free.beta_plus - 1) <= 0.1
    ok = free_ok and max(quad.values()) <= 1e-6 and verdict["pass"] and secs < 600
    record(acceptance_log, "09", ok,
           f"free beta proxies ({free.beta_minus:.4f}, {free.beta_plus:.4f}) to t={free.t_cap or 1e3:.4g}; "
           f"quadrature rel err t=10 {quad[10.0]:.1e}, t=100 {quad[100.0]:.1e}; "
           f"default beta- {default_series.beta_minus:.4f} vs alpha {ledger.alpha:.3g} "
           f"(margin {verdict['margin']:.4f}); {secs:.0f}s (<600s)")
    assert ok


# --- 10: shrinking band measure ------------------------------------------------------------------

def test_criterion_10_band_measure(acceptance_log):
    bundle = full_report(RunConfig())
    m = bundle.spectrum_estimate["band_measure"]
    ok = m["10"] < m["4"]
    record(acceptance_log, "10", ok,
           f"band measure level 4 = {m['4']:.6f}, level 10 = {m['10']:.6f} (report bundle); "
           f"bundle failures: {bundle.failures or 'none'}")
    assert ok
    assert bundle.ok
    assert 0 < bundle.constants_ledger["alpha"] <= 1
