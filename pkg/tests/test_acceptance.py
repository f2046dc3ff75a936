"""Acceptance criteria at their stated tolerances, on the default grid.

Each test records a PASS/FAIL line (shown in the terminal summary) and
then asserts the same verdict.
"""
import time

import numpy as np
import pytest

from kernellab import assemble, build_grid, eigensolve, validate_params
from kernellab.asymptotics import log_comparator
from kernellab.config import RunConfig, replace_section
from kernellab.discretize import extend_grid, refined_grid, similarity_transform_check
from kernellab.pipeline import run_verification, verification_context, wkb_report
from kernellab.propagate import chapman_kolmogorov_check, symmetry_defect
from kernellab.spectral import eigensolve_arrays, expansion_kernel_block, smallest_eigenvalues
from kernellab.verify import (
    oracle_shooting_lambda0,
    verify_eigenfunction_decay,
    verify_ground_state_bounds,
    verify_on_diagonal_lower,
)

from .conftest import REF_B

R = 20.0


def _params(b):
    return validate_params(3, 3, 4, b, 1)


@pytest.fixture(scope="module")
def systems():
    out = {}
    for b in REF_B:
        p = _params(b)
        out[b] = assemble(p, build_grid(R, 4000, params=p))
    return out


@pytest.fixture(scope="module")
def eigs(systems):
    return {b: eigensolve(s, 8) for b, s in systems.items()}


@pytest.fixture(scope="module")
def context():
    """Default configuration, b = 0: eigenpairs, kernel block and refined grid."""
    cfg = replace_section(RunConfig(), "params", b=0.0)
    return cfg, verification_context(cfg)


@pytest.fixture(scope="module")
def fits(context):
    cfg, ctx = context
    fits, _, extras = run_verification(cfg, ctx)
    return {f.inequality: f for f in fits}, extras


def test_criterion_01_chain_spectrum(acceptance, chain):
    d, e, exact = chain
    t0 = time.perf_counter()
    ev = smallest_eigenvalues(d, e, 100)
    lam, _, _, _ = eigensolve_arrays(d, e, np.ones(d.size), 10)
    elapsed = time.perf_counter() - t0
    rel = max(np.max(np.abs(ev - exact) / exact), np.max(np.abs(-lam - exact[:10]) / exact[:10]))
    ok = acceptance(1, rel <= 1e-10 and elapsed < 1.0, f"chain n=100 max rel error {rel:.2e} (<= 1e-10), {elapsed:.2f} s (< 1 s)")
    assert ok


def test_criterion_02_shooting_oracle(acceptance, systems):
    t0 = time.perf_counter()
    rels = {}
    for b, s in systems.items():
        lam = eigensolve(s, 1).lambda0
        shot = oracle_shooting_lambda0(_params(b), R)
        rels[b] = abs(lam - shot) / abs(shot)
    elapsed = time.perf_counter() - t0
    worst = max(rels.values())
    ok = acceptance(2, worst <= 1e-5 and elapsed < 30.0,
                    f"Sturm vs shooting lambda0 max rel {worst:.2e} (<= 1e-5) over b={list(rels)}, {elapsed:.1f} s (< 30 s)")
    assert ok


def test_criterion_03_truncation(acceptance, systems, eigs):
    t0 = time.perf_counter()
    p = _params(0.0)
    lam20 = eigs[0.0].lambda0
    lam30 = eigensolve(assemble(p, extend_grid(systems[0.0].grid, 30.0, params=p)), 1).lambda0
    elapsed = time.perf_counter() - t0
    rel = abs(lam20 - lam30) / abs(lam20)
    ok = acceptance(3, rel <= 1e-8 and elapsed < 60.0, f"|lambda0(R=20) - lambda0(R=30)|/|lambda0| = {rel:.2e} (<= 1e-8), {elapsed:.1f} s (< 60 s)")
    assert ok


def test_criterion_04_ground_state(acceptance, eigs):
    fits = {b: verify_ground_state_bounds(e, _params(b), R) for b, e in eigs.items()}
    p2 = _params(2.0)
    e2 = eigensolve(assemble(p2, build_grid(R, 4000, params=p2)), 1)
    wrong = lambda x: log_comparator(p2, x) + p2.b / (2 * p2.alpha) * np.log1p(x**p2.alpha)
    control = verify_ground_state_bounds(e2, p2, R, comparator=wrong)
    ratios = ", ".join(f"b={b:g}: {f.details['ratio']:.3f}/{f.max_residual:.3f}" for b, f in fits.items())
    ok = acceptance(4, all(f.passed for f in fits.values()) and not control.passed,
                    f"max/min and |slope| {ratios} (<= 3, <= 0.1); wrong-weight control at b=2 "
                    f"{'fails' if not control.passed else 'PASSES'} (ratio {control.details['ratio']:.3g}, slope {control.max_residual:.3g})")
    assert ok


def test_criterion_05_wkb_remainder(acceptance, eigs):
    t0 = time.perf_counter()
    rows = [row | {"b": b} for b, e in eigs.items() for row in wkb_report(_params(b), e.lambda0)]
    elapsed = time.perf_counter() - t0
    desc = "; ".join(f"b={r['b']:g} {r['barrier']} slope {r['slope']:.2f} vs {r['expected_slope']:.2f}" for r in rows)
    ok = acceptance(5, all(r["passed"] for r in rows) and elapsed < 5.0, f"{desc} (+-0.3), {elapsed:.1f} s (< 5 s)")
    assert ok


def test_criterion_06_similarity(acceptance, systems):
    worst, orders = 0.0, {}
    for b, s in systems.items():
        p = _params(b)
        fine = similarity_transform_check(s, p)["eigenvalue_rel_mismatch"]
        coarse = similarity_transform_check(assemble(p, refined_grid(s.grid, 2000)), p)["eigenvalue_rel_mismatch"]
        worst = max(worst, fine)
        orders[b] = np.log2(coarse / fine)
    ok_order = all(abs(o - 2.0) <= 0.3 for o in orders.values())
    ord_txt = ", ".join(f"b={b:g}: {o:.2f}" for b, o in orders.items())
    ok = acceptance(6, worst <= 1e-5 and ok_order,
                    f"first 5 eigenvalues drift vs symmetric max rel {worst:.2e} (<= 1e-5); order n=2000->4000 {ord_txt} (2 +- 0.3)")
    assert ok


def test_criterion_07_semigroup(acceptance, context):
    _, ctx = context
    block, eig, system = ctx.block, ctx.eig, ctx.setup.system
    ck = chapman_kolmogorov_check(system, block, 0.5, 0.5, True)
    sym = max(symmetry_defect(block, t) for t in block.times)
    K = block.pair_matrix(0.5)
    E = expansion_kernel_block(eig, 0.5, None, block.sources)[block.sources]
    gap = float(np.abs(K - E).max() / np.abs(K).max())
    ok = acceptance(7, ck <= 1e-3 and sym <= 1e-6 and gap <= 1e-3,
                    f"CK diagonal at t=1 {ck:.2e} (<= 1e-3); k_mu symmetry {sym:.2e} (<= 1e-6); stepping vs expansion at t=0.5 {gap:.2e} (<= 1e-3)")
    assert ok


def test_criterion_08_intrinsic_ultracontractivity(acceptance, fits):
    f = fits[0]["intrinsic_ultracontractivity"]
    ok = acceptance(8, f.passed, f"C2={f.constants['C2']:.3g}, max residual {f.max_residual:.3g} vs threshold {f.details['threshold']:.3g}")
    assert ok


def test_criterion_09_main_theorem(acceptance, fits):
    fB, fT = fits[0]["main_theorem"], fits[0]["main_theorem_simplified"]
    ok = acceptance(9, fB.passed and fT.passed,
                    f"B: residual {fB.max_residual:.3g} <= {fB.details['threshold']:.3g}, large-t spread {fB.details['large_t_spread']:.3g}; "
                    f"B~: residual {fT.max_residual:.3g} <= {fT.details['threshold']:.3g}; "
                    f"B <= B~ pointwise {fT.details['pointwise_B_le_B_tilde']}, profile dominated {fT.details['profile_dominated']}")
    assert ok


def test_criterion_10_on_diagonal(acceptance, fits, context):
    cfg, ctx = context
    f = fits[0]["on_diagonal_lower"]
    p = ctx.setup.params
    control = verify_on_diagonal_lower(ctx.block, p, ctx.eig.lambda0, list(cfg.verify.diag_t_grid), R, comparator_power=1)
    ok = acceptance(10, f.passed and not control.passed,
                    f"floor C={f.constants['C']:.3g}, variation {f.max_residual:.3g} (<= 0.2); "
                    f"comparator^1 control {'fails' if not control.passed else 'PASSES'}")
    assert ok


def test_criterion_11_functional_inequalities(acceptance, fits):
    ls, sp = fits[0]["log_sobolev"], fits[0]["sobolev_potential"]
    d = ls.details
    ok = acceptance(11, ls.passed and sp.passed,
                    f"log-Sobolev C1={ls.constants['C1']:.4g} (doubled {d['C1_doubled']:.4g}, refined {d['C1_refined']:.4g}) "
                    f"C2={ls.constants['C2']:.3g}; Sobolev C3={sp.constants['C3']:.4g} "
                    f"(doubled {sp.details['C3_doubled']:.4g}, refined {sp.details['C3_refined']:.4g}); stable within 20%")
    assert ok


def test_criterion_12_eigenfunction_decay(acceptance, fits, context):
    _, ctx = context
    f = fits[0]["eigenfunction_decay"]
    control = verify_eigenfunction_decay(ctx.eig, ctx.setup.params, R, 3, drop_agmon=True)
    consts = ", ".join(f"{k}={v:.3g}" for k, v in f.constants.items())
    ok = acceptance(12, f.passed and not control.passed,
                    f"{consts} interior-attained; e^J-dropped control {'fails' if not control.passed else 'PASSES'}")
    assert ok
