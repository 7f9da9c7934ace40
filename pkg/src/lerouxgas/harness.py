"""Experiment orchestration: ensembles, sweeps, diagnostics, persistence.

The sweep pipeline drives everything the acceptance checks need from one
ensemble per system size: simulate replicas -> block/term fields -> a priori
statistics, term norms and weak-form pairings -> pooled Young measure
diagnostics -> comparison against the fine-grid reference entropy solution.
Replica streams are independent Philox keys, so ensembles are reproducible
and embarrassingly parallel (threads share the jit kernel, which releases
the GIL).
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .blocks import default_kernel
from .config import ExperimentConfig
from .dynamics import DynamicsParams, TrajectoryRecord, sample_initial_profile, simulate
from .equilibrium import OBS_PSI
from .pde import (
    PdeField,
    global_entropy,
    l1_distance,
    riemann_init,
    solve_reference,
    test_function_bank,
    weak_entropy_residual,
)
from .production import decompose, pairings, quad_xt, replacement_field, report
from .spectral import (
    build_hyperplane,
    certify_gamma0,
    lsi_ratio_search,
    segment_walk_gap,
    spectral_gap,
)
from .young import (
    build_young_measure,
    cell_statistics,
    dirac_defect,
    family_moment_tables,
    tartar_family_stat,
)
from . import equilibrium


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

def run_ensemble(cfg: ExperimentConfig, n: int) -> list[TrajectoryRecord]:
    """Simulate cfg.replicas independent trajectories of size n."""
    sigma = cfg.sigma_of(n)
    params = DynamicsParams(n=n, sigma=sigma, beta=cfg.beta if cfg.sigma is None else None)
    rho0, u0 = cfg.profile(np.arange(n) / n)

    def one(rep: int) -> TrajectoryRecord:
        init = sample_initial_profile(rho0, u0, n, seed=cfg.seed, replica=2 * rep + 1)
        return simulate(
            params, init, cfg.T, snapshots=cfg.snapshots, seed=cfg.seed, replica=2 * rep
        )

    if cfg.threads <= 1:
        return [one(rep) for rep in range(cfg.replicas)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(one, range(cfg.replicas)))


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    se = 0.0 if len(v) < 2 else float(np.std(v, ddof=1) / math.sqrt(len(v)))
    return float(v.mean()), se


@dataclass
class EnsembleAnalysis:
    """Everything the sweep needs from one system size."""

    n: int
    sigma: float
    l: int
    events_mean: float
    replacement_mse: tuple
    gradient_psi: tuple
    gradient_conserved: tuple
    sup_A1: tuple
    sup_A2: tuple
    B1_hm1: tuple
    B2_hm1: tuple
    C1_l1: tuple
    C2_l1: tuple
    martingale_stats: list  # per test function: (mean, se)
    c2_pairing_max: float  # max over replicas x phis of <C2, phi> (should be <= 0)
    tartar_stat: float
    dirac_max: float
    cell_var_max: float
    cell_mean_l1: float
    l1_to_reference: tuple
    weak_residual_eps: float
    clamp_max: float


def analyze_ensemble(
    cfg: ExperimentConfig,
    n: int,
    records: list[TrajectoryRecord],
    reference: PdeField,
    a_grid: np.ndarray | None = None,
    bank=None,
) -> EnsembleAnalysis:
    """Stream the per-replica decomposition and pool the ensemble diagnostics."""
    sigma = cfg.sigma_of(n)
    l = cfg.block_size(n)
    kernel = default_kernel()
    pair = global_entropy()
    if bank is None:
        bank = test_function_bank(6, cfg.T)
    if a_grid is None:
        a_grid = np.linspace(-2.0, 2.0, 41)

    x_grid = np.arange(n) / n
    ref_rho = np.stack([np.interp(x_grid, reference.x, reference.rho[k], period=1.0)
                        for k in range(len(reference.times))])
    ref_u = np.stack([np.interp(x_grid, reference.x, reference.u[k], period=1.0)
                      for k in range(len(reference.times))])

    sup_a1, sup_a2, b1n, b2n, c1n, c2n = [], [], [], [], [], []
    mse_r, grad_psi_r, grad_cons_r = [], [], []
    mart = []
    c2_pair_max = -np.inf
    l1_dist = []
    weak_eps = []
    clamp = 0.0
    pooled = []
    for rec in records:
        tf = decompose(rec, pair, l, kernel)
        clamp = max(clamp, tf.clamp_max)
        rep = report(tf)
        sup_a1.append(rep.sup_A1)
        sup_a2.append(rep.sup_A2)
        b1n.append(rep.B1_hm1)
        b2n.append(rep.B2_hm1)
        c1n.append(rep.C1_l1)
        c2n.append(rep.C2_l1)
        mse_r.append(quad_xt(replacement_field(tf, "psi") ** 2, tf.times))
        grad_psi_r.append(quad_xt(tf["dx_psi_hat"] ** 2, tf.times))
        grad_cons_r.append(quad_xt(tf["dx_eta_hat"] ** 2 + tf["dx_xi_hat"] ** 2, tf.times))
        row = []
        for phi in bank:
            pr = pairings(tf, phi)
            row.append(pr["martingale"])
            c2_pair_max = max(c2_pair_max, pr["C2"])
        mart.append(row)
        err = np.abs(tf["eta_hat"] - ref_rho) + np.abs(tf["xi_hat"] - ref_u)
        l1_dist.append(float(np.trapezoid(err.mean(axis=1), tf.times)))
        res = [weak_entropy_residual(tf.times, x_grid, tf["eta_hat"], tf["xi_hat"], pair, phi)
               for phi in bank]
        weak_eps.append(max(0.0, -min(res)))
        # keep only what the pooled Young measure needs; drop the rest
        pooled.append((tf.times, x_grid, tf["eta_hat"], tf["xi_hat"]))
        del tf

    mse = _mean_se(mse_r)
    grad_psi = _mean_se(grad_psi_r)
    grad_cons = _mean_se(grad_cons_r)
    ym = build_young_measure(pooled, n_tcells=cfg.t_cells, n_xcells=cfg.x_cells)
    tables = family_moment_tables(ym, a_grid)
    tartar = tartar_family_stat(ym, a_grid, tables=tables)
    dirac = float(np.max(dirac_defect(ym, a_grid, tables=tables)))
    stats = cell_statistics(ym)
    var_max = float(np.max(stats["var_rho"] + stats["var_u"]))
    # cell means against the reference averaged over the same cells
    ref_cells = build_young_measure(
        [(reference.times, reference.x, reference.rho, reference.u)],
        n_tcells=cfg.t_cells, n_xcells=cfg.x_cells,
    )
    ref_stats = cell_statistics(ref_cells)
    area = ym.cell_area()
    mean_l1 = float(
        np.sum(area * (np.abs(stats["mean_rho"] - ref_stats["mean_rho"])
                       + np.abs(stats["mean_u"] - ref_stats["mean_u"])))
    )
    mart = np.asarray(mart)  # (replicas, n_phi)
    mart_stats = [_mean_se(mart[:, j]) for j in range(mart.shape[1])]
    return EnsembleAnalysis(
        n=n,
        sigma=sigma,
        l=l,
        events_mean=float(np.mean([r.events for r in records])),
        replacement_mse=mse,
        gradient_psi=grad_psi,
        gradient_conserved=grad_cons,
        sup_A1=_mean_se(sup_a1),
        sup_A2=_mean_se(sup_a2),
        B1_hm1=_mean_se(b1n),
        B2_hm1=_mean_se(b2n),
        C1_l1=_mean_se(c1n),
        C2_l1=_mean_se(c2n),
        martingale_stats=mart_stats,
        c2_pairing_max=float(c2_pair_max),
        tartar_stat=tartar,
        dirac_max=dirac,
        cell_var_max=var_max,
        cell_mean_l1=mean_l1,
        l1_to_reference=_mean_se(l1_dist),
        weak_residual_eps=float(np.mean(weak_eps)),
        clamp_max=clamp,
    )


def fit_loglog(xs, ys, ys_se=None) -> tuple[float, float]:
    """Least-squares slope of log y on log x, with propagated standard error."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    lx_c = lx - lx.mean()
    denom = float(np.sum(lx_c**2))
    slope = float(np.sum(lx_c * ly) / denom)
    if ys_se is None:
        return slope, 0.0
    rel = np.asarray(ys_se, dtype=float) / np.asarray(ys, dtype=float)
    se = float(np.sqrt(np.sum((lx_c / denom) ** 2 * rel**2)))
    return slope, se


@dataclass
class SweepReport:
    """Per-size analyses plus the fitted exponents and trend verdicts."""

    config: dict
    analyses: list[EnsembleAnalysis]
    fits: dict = field(default_factory=dict)
    trends: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "per_n": [
                {k: v for k, v in a.__dict__.items()} for a in self.analyses
            ],
            "fits": self.fits,
            "trends": self.trends,
        }
        return json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def run_sweep(cfg: ExperimentConfig, keep_records: bool = False):
    """Full pipeline over cfg.n; returns (SweepReport, records or None)."""
    reference = solve_reference(
        lambda x: cfg.profile(x), cfg.T, cfg.nx_pde, scheme="rusanov", n_times=cfg.snapshots
    )
    analyses = []
    kept = {}
    for n in cfg.n:
        records = run_ensemble(cfg, n)
        analyses.append(analyze_ensemble(cfg, n, records, reference))
        if keep_records:
            kept[n] = records
    rep = SweepReport(config=cfg.resolved(), analyses=analyses)
    if len(analyses) >= 2:
        xs_mse = [a.l**2 / (a.n**2 * a.sigma) for a in analyses]
        rep.fits["replacement_mse_slope"] = fit_loglog(
            xs_mse, [a.replacement_mse[0] for a in analyses],
            [a.replacement_mse[1] for a in analyses],
        )
        rep.fits["sup_A1_slope"] = fit_loglog(
            [a.n / a.l**2 for a in analyses], [a.sup_A1[0] for a in analyses],
            [a.sup_A1[1] for a in analyses],
        )
        rep.fits["sup_A2_slope"] = fit_loglog(
            [a.n**2 * a.sigma / a.l**3 for a in analyses], [a.sup_A2[0] for a in analyses],
            [a.sup_A2[1] for a in analyses],
        )
        rep.fits["events_slope"] = fit_loglog(
            [a.n**3 * a.sigma for a in analyses], [a.events_mean for a in analyses]
        )
        grad = [a.sigma * a.gradient_conserved[0] for a in analyses]
        rep.fits["sigma_gradient_ratio"] = float(max(grad) / min(grad))
        first, last = analyses[0], analyses[-1]
        rep.trends = {
            "B1_decreases": last.B1_hm1[0] < first.B1_hm1[0],
            "B2_decreases": last.B2_hm1[0] < first.B2_hm1[0],
            "C1_decreases": last.C1_l1[0] < first.C1_l1[0],
            "C2_bounded_ratio": float(
                max(a.C2_l1[0] for a in analyses) / min(a.C2_l1[0] for a in analyses)
            ),
            "tartar_decreases": last.tartar_stat < first.tartar_stat,
            "dirac_decreases": last.dirac_max < first.dirac_max,
            "variance_decreases": last.cell_var_max < first.cell_var_max,
            "l1_monotone": all(
                analyses[i + 1].l1_to_reference[0] < analyses[i].l1_to_reference[0]
                for i in range(len(analyses) - 1)
            ),
            "weak_residual_decreases": last.weak_residual_eps < first.weak_residual_eps
            or (last.weak_residual_eps < 1e-8 and first.weak_residual_eps < 1e-8),
            "martingale_max_z": float(
                max(
                    abs(m) / s if s > 0 else 0.0
                    for a in analyses
                    for (m, s) in a.martingale_stats
                )
            ),
            "c2_pairing_max": float(max(a.c2_pairing_max for a in analyses)),
        }
    return rep, (kept if keep_records else None)


def evaluate_sweep(rep: SweepReport) -> dict:
    """Named pass/fail verdicts of the sweep against the shipped thresholds."""
    f, t = rep.fits, rep.trends
    if not f or not t:
        return {}
    checks = {
        "replacement_slope_within_30pct": abs(f["replacement_mse_slope"][0] - 1.0) <= 0.3,
        "sigma_gradient_ratio_below_2": f["sigma_gradient_ratio"] < 2.0,
        "A1_slope_within_25pct": abs(f["sup_A1_slope"][0] - 1.0) <= 0.25,
        "A2_slope_within_25pct": abs(f["sup_A2_slope"][0] - 1.0) <= 0.25,
        "B1_decreases": t["B1_decreases"],
        "B2_decreases": t["B2_decreases"],
        "C1_decreases": t["C1_decreases"],
        "C2_ratio_below_3": t["C2_bounded_ratio"] <= 3.0,
        "martingale_mean_within_4se": t["martingale_max_z"] < 4.0,
        "c2_pairing_nonpositive": t["c2_pairing_max"] <= 1e-12,
        "tartar_decreases": t["tartar_decreases"],
        "dirac_decreases": t["dirac_decreases"],
        "variance_decreases": t["variance_decreases"],
        "l1_monotone": t["l1_monotone"],
        "weak_residual_decreases": t["weak_residual_decreases"],
    }
    checks["all_passed"] = all(checks.values())
    return checks


# ---------------------------------------------------------------------------
# other modes
# ---------------------------------------------------------------------------

def self_convergence(cfg: ExperimentConfig, resolutions=(512, 1024, 2048, 4096)) -> dict:
    """Successive-resolution L1 differences of the reference solver."""
    sols = {nx: solve_reference(lambda x: cfg.profile(x), cfg.T, nx, n_times=50)
            for nx in resolutions}
    diffs = {}
    for a, b in zip(resolutions[:-1], resolutions[1:]):
        diffs[f"{a}->{b}"] = l1_distance(sols[a], sols[b])
    return {
        "resolutions": list(resolutions),
        "l1_successive": diffs,
        "factor_first_to_last": diffs[f"{resolutions[0]}->{resolutions[1]}"]
        / diffs[f"{resolutions[-2]}->{resolutions[-1]}"],
    }


def spectral_table(l_min: int = 3, l_max: int = 8, lsi_l_max: int = 7, seed: int = 0) -> list[dict]:
    """Gap, LSI and gamma0 columns over all feasible hyperplanes in the l range.

    The exponential-moment certificates gamma0 are per (l, mode) (they are
    already maximized over (N, Z)), so every row of a given l repeats them.
    """
    rows = []
    for l in range(l_min, l_max + 1):
        g0 = certify_gamma0(l, OBS_PSI, modes=(0,)) if l <= 10 else None
        g1 = certify_gamma0(l, OBS_PSI, modes=(1,)) if l <= 10 else None
        for (N, Z) in equilibrium.feasible_pairs(l):
            m = build_hyperplane(l, N, Z)
            gap = spectral_gap(m)
            if gap is None:
                continue
            row = {
                "l": l, "N": N, "Z": Z, "dimension": m.dim,
                "gap": gap, "gap_l2": gap * l * l,
                "walk_gap": segment_walk_gap(l),
                "gamma0_M0": g0, "gamma0_M1": g1,
            }
            if l <= lsi_l_max and N == l // 3 and Z in (0, 1):
                ratio, _ = lsi_ratio_search(m, seed=seed)
                row["lsi_ratio"] = ratio
                row["ratio_over_l2"] = ratio / l**2
            rows.append(row)
    return rows


def lemma_check(l_values=(8, 10, 12)) -> dict:
    """Certified gamma0 per l for both weighting modes (and jointly)."""
    out = {}
    for l in l_values:
        g_joint = certify_gamma0(l, OBS_PSI, modes=(0, 1))
        out[str(l)] = {
            "gamma0_M0": certify_gamma0(l, OBS_PSI, modes=(0,)),
            "gamma0_M1": certify_gamma0(l, OBS_PSI, modes=(1,)),
            "gamma0_joint": g_joint,
        }
    ls = [str(l) for l in l_values]
    out["degradation"] = out[ls[-1]]["gamma0_joint"] / out[ls[0]]["gamma0_joint"]
    return out


# ---------------------------------------------------------------------------
# manifest and file output
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(outdir: Path, cfg: ExperimentConfig, t0: float, extra: dict | None = None) -> Path:
    files = sorted(p for p in outdir.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "version": __version__,
        "config": cfg.resolved(),
        "replica_seeds": [[cfg.seed, 2 * rep] for rep in range(cfg.replicas)],
        "wall_clock_s": time.time() - t0,
        "files": {str(p.relative_to(outdir)): _sha256(p) for p in files},
    }
    if extra:
        manifest.update(extra)
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def run(cfg: ExperimentConfig) -> Path:
    """Execute the configured mode, write outputs + manifest, return out dir."""
    t0 = time.time()
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    extra: dict = {"mode": cfg.mode}
    try:
        if cfg.mode == "simulate":
            _mode_simulate(cfg, outdir)
        elif cfg.mode == "pde":
            _mode_pde(cfg, outdir)
        elif cfg.mode == "sweep":
            rep, _ = run_sweep(cfg)
            (outdir / "sweep_report.json").write_text(rep.to_json() + "\n")
            _sweep_csv(rep, outdir / "sweep_trends.csv")
            (outdir / "sweep_verdicts.json").write_text(
                json.dumps(evaluate_sweep(rep), indent=2, sort_keys=True) + "\n"
            )
        elif cfg.mode == "spectral":
            rows = spectral_table(cfg.l_min, cfg.l_max)
            _rows_csv(rows, outdir / "spectral.csv")
        elif cfg.mode == "lemma-check":
            (outdir / "lemma_check.json").write_text(
                json.dumps(lemma_check(), indent=2, sort_keys=True) + "\n"
            )
        elif cfg.mode == "diagnose":
            _mode_diagnose(cfg, outdir)
    except Exception as exc:  # partial outputs stay on disk for inspection
        extra["error"] = f"{type(exc).__name__}: {exc}"
        write_manifest(outdir, cfg, t0, extra)
        raise
    write_manifest(outdir, cfg, t0, extra)
    return outdir


def _mode_simulate(cfg: ExperimentConfig, outdir: Path) -> None:
    from .blocks import snapshot_fields
    from .equilibrium import OBS_ETA, OBS_PHI, OBS_XI

    kernel = default_kernel()
    for n in cfg.n:
        records = run_ensemble(cfg, n)
        l = cfg.block_size(n)
        for rec in records[: min(len(records), 4)]:
            rec.save(outdir / f"n{n}" / f"replica{rec.replica}", fmt="binary")
        fields = snapshot_fields(
            records[0], [OBS_ETA, OBS_XI, OBS_PSI, OBS_PHI], l, kernel,
            derivatives=("eta", "xi"),
        )
        fields.to_csv(outdir / f"n{n}" / "block_fields.csv")


def _mode_pde(cfg: ExperimentConfig, outdir: Path) -> None:
    field = solve_reference(lambda x: cfg.profile(x), cfg.T, cfg.nx_pde, n_times=cfg.snapshots)
    field.to_csv(outdir / "pde_field.csv")
    res = self_convergence(cfg)
    (outdir / "self_convergence.json").write_text(json.dumps(res, indent=2, sort_keys=True) + "\n")


def _mode_diagnose(cfg: ExperimentConfig, outdir: Path) -> None:
    reference = solve_reference(lambda x: cfg.profile(x), cfg.T, cfg.nx_pde, n_times=cfg.snapshots)
    rows = []
    for n in cfg.n:
        records = run_ensemble(cfg, n)
        a = analyze_ensemble(cfg, n, records, reference)
        rows.append({
            "n": a.n, "sigma": a.sigma, "l": a.l,
            "tartar": a.tartar_stat, "dirac": a.dirac_max,
            "cell_var_max": a.cell_var_max, "cell_mean_l1": a.cell_mean_l1,
            "l1_to_reference": a.l1_to_reference[0],
            "weak_residual_eps": a.weak_residual_eps,
        })
    (outdir / "diagnostics.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    _rows_csv(rows, outdir / "defects_vs_n.csv")


def _rows_csv(rows: list[dict], path: Path) -> None:
    if not rows:
        path.write_text("")
        return
    keys = sorted({k for r in rows for k in r})

    def fmt(v):
        return "" if v is None else repr(v)

    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(fmt(r.get(k)) for k in keys) + "\n")


def _sweep_csv(rep: SweepReport, path: Path) -> None:
    rows = []
    for a in rep.analyses:
        rows.append({
            "n": a.n, "sigma": a.sigma, "l": a.l,
            "replacement_mse": a.replacement_mse[0],
            "gradient_conserved": a.gradient_conserved[0],
            "sup_A1": a.sup_A1[0], "sup_A2": a.sup_A2[0],
            "B1_hm1": a.B1_hm1[0], "B2_hm1": a.B2_hm1[0],
            "C1_l1": a.C1_l1[0], "C2_l1": a.C2_l1[0],
            "tartar": a.tartar_stat, "dirac": a.dirac_max,
            "cell_var_max": a.cell_var_max,
            "l1_to_reference": a.l1_to_reference[0],
            "weak_residual_eps": a.weak_residual_eps,
        })
    _rows_csv(rows, path)
