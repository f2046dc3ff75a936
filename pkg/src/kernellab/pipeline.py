"""Run stages behind the command-line interface.

Every stage writes deterministic tables and records into the output
directory; wall-clock data goes to ``meta.json`` only.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .asymptotics import (
    agmon_J,
    default_k,
    h_fun,
    log_comparator,
    residual_slope,
    wkb_coefficients,
    wkb_residual_g1,
)
from .config import RunConfig, dumps
from .discretize import DiscreteSystem, assemble, build_grid, dump_system, refined_grid, similarity_transform_check
from .model import OperatorParams
from .propagate import KernelBlock, KernelSlice, chapman_kolmogorov_check, export_slice, kernel_block, symmetry_defect, to_k
from .quadrature import composite_gauss_legendre
from .spectral import EigenData, convergence_study, eigensolve, expansion_kernel_block, export_eigenpairs
from .verify import (
    BoundFit,
    LogSobolevProbe,
    bound_dominance,
    oracle_dense_eigen,
    oracle_shooting_lambda0,
    probe_cap,
    sample_sources,
    verify_eigenfunction_decay,
    verify_ground_state_bounds,
    verify_intrinsic_ultracontractivity,
    verify_log_sobolev,
    verify_main_theorem,
    verify_on_diagonal_lower,
    verify_sobolev_potential,
)

log = logging.getLogger("kernellab")

EXIT_OK, EXIT_FAIL, EXIT_INFRA = 0, 1, 2


class OracleDisagreement(RuntimeError):
    pass


@dataclass
class Setup:
    cfg: RunConfig
    params: OperatorParams
    system: DiscreteSystem

    @property
    def R(self) -> float:
        return self.cfg.grid.R


def prepare(cfg: RunConfig) -> Setup:
    p = cfg.operator_params()
    g = cfg.grid
    grid = build_grid(g.R, g.n, g.grading, g.ratio, params=p)
    return Setup(cfg, p, assemble(p, grid))


# ---------------------------------------------------------------- output helpers


def ensure_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_test"
    probe.write_text("")
    probe.unlink()
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def write_records(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_record_table(path, records) -> None:
    """Flat records as a TSV table over the union of keys (missing cells empty)."""
    keys = sorted({k for rec in records for k in rec})
    with open(path, "w") as fh:
        fh.write("\t".join(keys) + "\n")
        for rec in records:
            fh.write("\t".join(str(rec.get(k, "")) for k in keys) + "\n")


def read_records(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_series(out: Path, figure: str, series: str, x, y) -> None:
    """One ``(x, y)`` series for later plotting: ``plot_<figure>__<series>.tsv``."""
    with open(out / f"plot_{figure}__{series}.tsv", "w") as fh:
        fh.write("x\ty\n")
        for a, b in zip(np.asarray(x, float), np.asarray(y, float)):
            fh.write(f"{float(a)!r}\t{float(b)!r}\n")


def write_meta(out: Path, command: str, cfg: RunConfig, elapsed: float, status: int) -> None:
    from . import __version__

    write_json(out / "meta.json", {
        "command": command,
        "version": __version__,
        "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "elapsed_seconds": round(elapsed, 3),
        "exit_code": status,
    })
    (out / "config_used.txt").write_text(dumps(cfg))


# ---------------------------------------------------------------- stages


def run_eigen(cfg: RunConfig, out: Path, plot_data: bool = False) -> int:
    st = prepare(cfg)
    eig = eigensolve(st.system, cfg.solver.m)
    export_eigenpairs(eig, out / "eigenpairs.tsv")
    dump_system(st.system, out / "system_dump.tsv")
    n = cfg.grid.n
    ladder = [max(100, n // 4), max(100, n // 2), n]
    conv = convergence_study(st.params, [st.R, 1.5 * st.R], ladder, st.system.grid)
    sim = similarity_transform_check(st.system, st.params, m=min(5, cfg.solver.m))
    rec = conv.as_record()
    rec.update({
        "lambda0": eig.lambda0,
        "spectral_gap": float(eig.eigenvalues[0] - eig.eigenvalues[1]) if eig.m > 1 else float("nan"),
        "max_backward_error": float(eig.backward_errors.max()),
        "max_residual": float(eig.residuals.max()),
        "similarity_eigenvalue_rel_mismatch": sim["eigenvalue_rel_mismatch"],
        "similarity_eigenvector_mismatch": sim["eigenvector_mismatch"],
        "truncation_indicator_exp_minus_J_R": st.system.grid.truncation_indicator,
        "tolerance": "backward error <= 1e-12 per pair; order from last three ladder levels",
        "probe": f"ladder n={ladder}, R in [{st.R:g}, {1.5 * st.R:g}]",
    })
    write_json(out / "convergence.json", rec)
    if plot_data:
        for j in range(eig.m):
            write_series(out, "eigenfunctions", f"psi_{j}", eig.nodes, eig.psi[:, j])
        sel = (eig.nodes >= 1) & (eig.nodes <= probe_cap(st.R))
        x = eig.nodes[sel]
        write_series(out, "ground_state_ratio", "Phi_over_comparator", x,
                     np.exp(np.log(eig.phi_vectors[sel, 0]) - log_comparator(st.params, x)))
    log.info("eigen: lambda0 = %.10g, observed order %.3f", eig.lambda0, conv.observed_order)
    return EXIT_OK


def _nearest_sources(system: DiscreteSystem, radii):
    idx = np.clip(np.searchsorted(system.nodes, radii), 0, system.size - 1)
    return np.unique(idx)


def run_kernel(cfg: RunConfig, out: Path, plot_data: bool = False) -> int:
    st = prepare(cfg)
    p = st.params
    times = sorted(set(cfg.kernel.times))
    sources = _nearest_sources(st.system, cfg.kernel.radii)
    block = kernel_block(st.system, sources, times, cfg.solver.dt, cfg.solver.scheme)
    eig = eigensolve(st.system, cfg.solver.m)
    checks = {}
    for t in times:
        expansion = expansion_kernel_block(eig, t, None, sources)
        for k, j in enumerate(sources):
            s = block.slice(t, k)
            for sl in (s, to_k(s, p)):
                export_slice(sl, out / f"kernel_{sl.picture}_t{t:g}_r{sl.source_r:.4g}_stepping.tsv")
            e = KernelSlice(t, int(j), expansion[:, k], st.system.nodes, "k_mu", "expansion")
            export_slice(e, out / f"kernel_k_mu_t{t:g}_r{e.source_r:.4g}_expansion.tsv")
            if plot_data:
                write_series(out, f"kernel_t{t:g}", f"r{s.source_r:.4g}", s.nodes, s.values)
        checks[f"symmetry_defect_t{t:g}"] = symmetry_defect(block, t)
        checks[f"expansion_gap_t{t:g}"] = float(
            np.abs(block.pair_matrix(t) - expansion[sources]).max() / np.abs(block.pair_matrix(t)).max()
        )
        checks[f"min_over_max_t{t:g}"] = float(block.columns[t].min() / block.columns[t].max())
    for t1 in times:
        if 2 * t1 in block.columns:
            checks[f"chapman_kolmogorov_diag_t{2 * t1:g}"] = chapman_kolmogorov_check(st.system, block, t1, t1, True)
    checks["tolerance"] = "symmetry <= 1e-6; expansion gap <= 1e-3 (max-normalized); CK diagonal <= 1e-3"
    checks["probe"] = f"sources at r = {[round(float(r), 4) for r in st.system.nodes[sources]]}"
    write_json(out / "kernel_checks.json", checks)
    return EXIT_OK


def wkb_report(p: OperatorParams, lambda0: float, k: int | None = None) -> list:
    k = default_k(p) if k is None else k
    expected = -min(k * p.xi, p.alpha)
    rows = []
    for label, lam in (("lower", 0.0), ("upper", 2.0 * lambda0)):
        model = wkb_coefficients(p, lam, k)
        slope = residual_slope(model)
        sens = {f"slope_k{kk}": residual_slope(wkb_coefficients(p, lam, kk)) for kk in range(3, 7)}
        row = {
            "barrier": label,
            "lambda": lam,
            "k": k,
            "slope": slope,
            "expected_slope": expected,
            "passed": bool(abs(slope - expected) <= 0.3),
            "tolerance": "|slope - expected| <= 0.3",
            "probe": "200 log-spaced radii in [5, 50]",
        }
        row.update({f"c{i}": c for i, c in enumerate(model.coeffs)})
        row.update(sens)
        rows.append(row)
    return rows


def run_wkb(cfg: RunConfig, out: Path, plot_data: bool = False) -> int:
    st = prepare(cfg)
    lam0 = eigensolve(st.system, 1).lambda0
    rows = wkb_report(st.params, lam0, cfg.solver.k_terms)
    with open(out / "wkb_coefficients.tsv", "w") as fh:
        fh.write("barrier\tlambda\tk\t" + "\t".join(f"c{i}" for i in range(rows[0]["k"] + 1)) + "\n")
        for row in rows:
            cs = "\t".join(repr(float(row[f"c{i}"])) for i in range(row["k"] + 1))
            fh.write(f"{row['barrier']}\t{float(row['lambda'])!r}\t{row['k']}\t{cs}\n")
    write_records(out / "wkb_report.jsonl", rows)
    if plot_data:
        r = np.geomspace(5, 50, 200)
        for row in rows:
            model = wkb_coefficients(st.params, row["lambda"], row["k"])
            write_series(out, "wkb_remainder", row["barrier"], r, np.abs(r**2 * wkb_residual_g1(model, r) - row["lambda"]))
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_FAIL


def oracle_gates(st: Setup, eig: EigenData, shooting: bool = True) -> dict:
    """Independent cross-checks; any disagreement is an infrastructure failure."""
    p = st.params
    gates = {}
    J_adapt = agmon_J(p, 10.0, min(1e-10, st.cfg.solver.quad_rel_tol))
    J_dense = composite_gauss_legendre(lambda s: np.sqrt(h_fun(p, s)), 1.0, 10.0, panels=10_000)
    gates["quadrature_rel_diff"] = abs(J_adapt - J_dense) / J_dense
    small = assemble(p, refined_grid(st.system.grid, 201))
    sd, so = small.symmetrized()
    dense = oracle_dense_eigen(sd, so)
    # the symmetrized matrix has eigenvalues -lambda_j
    sturm = -eigensolve(small, 5).eigenvalues
    radius = np.abs(dense).max()
    gates["dense_vs_sturm_scaled"] = float(np.abs(np.sort(sturm) - dense[:5]).max() / radius)
    if shooting:
        lam_shoot = oracle_shooting_lambda0(p, st.R)
        gates["shooting_lambda0"] = lam_shoot
        gates["shooting_rel_diff"] = abs(lam_shoot - eig.lambda0) / abs(eig.lambda0)
    bad = []
    if gates["quadrature_rel_diff"] > 1e-8:
        bad.append("quadrature")
    if gates["dense_vs_sturm_scaled"] > 1e-10:
        bad.append("dense eigen")
    if shooting and gates["shooting_rel_diff"] > 1e-5:
        bad.append("shooting")
    gates["tolerance"] = "quadrature 1e-8 rel; dense 1e-10 x spectral radius; shooting 1e-5 rel"
    gates["passed"] = not bad
    if bad:
        raise OracleDisagreement(f"oracle disagreement: {', '.join(bad)} ({gates})")
    return gates


@dataclass
class VerifyContext:
    """Expensive shared state for the verifiers: eigenpairs, kernel block, refined grid."""

    setup: Setup
    eig: EigenData
    block: KernelBlock
    fine: DiscreteSystem
    fine_eig: EigenData
    gates: dict


def verification_context(cfg: RunConfig) -> VerifyContext:
    st = prepare(cfg)
    v = cfg.verify
    eig = eigensolve(st.system, max(cfg.solver.m, 3))
    gates = oracle_gates(st, eig, v.shooting)
    sources = sample_sources(st.system.nodes, v.r_min, probe_cap(st.R), v.kernel_radii)
    times = sorted(set(v.t_grid) | set(v.large_t_grid) | set(v.diag_t_grid) | {0.5, 1.0})
    block = kernel_block(st.system, sources, times, cfg.solver.dt, cfg.solver.scheme)
    fine = assemble(st.params, refined_grid(st.system.grid, v.refine_factor * (cfg.grid.n - 1) + 1))
    return VerifyContext(st, eig, block, fine, eigensolve(fine, 3), gates)


def run_verification(cfg: RunConfig, ctx: VerifyContext | None = None) -> tuple:
    """All verifiers for one configuration; returns ``(fits, gates, extras)``."""
    ctx = verification_context(cfg) if ctx is None else ctx
    st, eig, block = ctx.setup, ctx.eig, ctx.block
    p, R, v = st.params, st.R, cfg.verify
    corrupt = v.corrupt_comparator
    no_agmon = (lambda x: log_comparator(p, x, J=0.0)) if corrupt else None
    fits = [verify_ground_state_bounds(eig, p, R, comparator=no_agmon, ratio_max=v.ratio_max, slope_max=v.slope_max)]
    t_grid = list(v.t_grid)
    fits.append(verify_intrinsic_ultracontractivity(block, eig, p, t_grid, R, v.fit_rel_tol))
    fits.append(verify_main_theorem(block, p, eig.lambda0, t_grid, R, "B", v.fit_rel_tol, v.large_t_grid))
    tilde = verify_main_theorem(block, p, eig.lambda0, t_grid, R, "B_tilde", v.fit_rel_tol, v.large_t_grid)
    dom = bound_dominance(block, p, eig.lambda0, t_grid, R)
    tilde.details.update(dom)
    tilde.passed = bool(tilde.passed and dom["pointwise_B_le_B_tilde"] and dom["profile_dominated"])
    fits.append(tilde)
    fits.append(verify_on_diagonal_lower(block, p, eig.lambda0, list(v.diag_t_grid), R, comparator=no_agmon,
                                         variation_max=v.diag_variation))
    lo, hi, count = v.eps_grid
    probes = LogSobolevProbe(v.bumps, tuple(np.geomspace(lo, hi, int(count))))
    fits.append(verify_log_sobolev(st.system, eig, p, R, probes, refined=(ctx.fine, ctx.fine_eig),
                                   stability=v.stability))
    fits.append(verify_sobolev_potential(st.system, p, R, v.f_count, refined=(ctx.fine, None), stability=v.stability))
    fits.append(verify_eigenfunction_decay(eig, p, R, 3, drop_agmon=corrupt))
    extras = {
        "lambda0": eig.lambda0,
        "chapman_kolmogorov_diag_t1": chapman_kolmogorov_check(st.system, block, 0.5, 0.5, True),
        "symmetry_defect_t0.5": symmetry_defect(block, 0.5),
        "phi_picture_decay_passed": verify_eigenfunction_decay(eig, p, R, 3, picture="phi").passed,
    }
    return fits, ctx.gates, extras


def run_verify(cfg: RunConfig, out: Path, plot_data: bool = False) -> int:
    fits, gates, extras = run_verification(cfg)
    records = [f.to_record() for f in fits]
    write_records(out / "verify_records.jsonl", records)
    if "tsv" in cfg.output.formats:
        write_record_table(out / "verify_records.tsv", records)
    write_json(out / "oracles.json", gates)
    write_json(out / "verify_extras.json", extras)
    lines = [f.summary_line() for f in fits]
    (out / "verify_summary.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        log.info(line)
    if plot_data:
        for f in fits:
            if "s" in f.details and "t_grid" in f.details:
                write_series(out, "kernel_profiles", f.inequality, f.details["t_grid"], f.details["s"])
        lsob = next(f for f in fits if f.inequality == "log_sobolev")
        write_series(out, "log_sobolev", "F_exact", lsob.details["eps_grid"], lsob.details["F_exact"])
        C1, C2 = lsob.constants["C1"], lsob.constants["C2"]
        eps = lsob.details["eps_grid"]
        write_series(out, "log_sobolev", "fitted_bound", eps, C1 * eps ** (-cfg.operator_params().gamma) + C2)
    return EXIT_OK if all(f.passed for f in fits) else EXIT_FAIL


def run_report(cfg: RunConfig, out: Path, plot_data: bool = False) -> int:
    """Collect earlier outputs in ``out`` into ``report.tsv`` and render figures."""
    rows = []
    rec_path = out / "verify_records.jsonl"
    if rec_path.exists():
        for rec in read_records(rec_path):
            rows.append(("verify", rec["inequality"], rec["passed"], rec["max_residual"], rec["tolerance"], rec["probe"]))
    wkb_path = out / "wkb_report.jsonl"
    if wkb_path.exists():
        for rec in read_records(wkb_path):
            rows.append(("wkb", f"remainder_slope_{rec['barrier']}", rec["passed"], rec["slope"], rec["tolerance"], rec["probe"]))
    conv_path = out / "convergence.json"
    if conv_path.exists():
        rec = json.loads(conv_path.read_text())
        ok = 1.7 <= rec["observed_order"] <= 2.3
        rows.append(("eigen", "observed_order", ok, rec["observed_order"], "order in [1.7, 2.3]", rec["probe"]))
    if not rows:
        raise FileNotFoundError(f"no earlier outputs found in {out}")
    with open(out / "report.tsv", "w") as fh:
        fh.write("stage\tcheck\tpassed\tstatistic\ttolerance\tprobe\n")
        for row in rows:
            fh.write("\t".join(str(x) for x in row) + "\n")
    from .plotting import render_figures

    figures = render_figures(out)
    summary = [f"{'PASS' if r[2] else 'FAIL'} {r[0]}:{r[1]} statistic={r[3]}" for r in rows]
    summary += [f"figure {Path(f).name}" for f in figures]
    (out / "report_summary.txt").write_text("\n".join(summary) + "\n")
    return EXIT_OK if all(r[2] for r in rows) else EXIT_FAIL


STAGES = {
    "eigen": run_eigen,
    "kernel": run_kernel,
    "wkb": run_wkb,
    "verify": run_verify,
    "report": run_report,
}
