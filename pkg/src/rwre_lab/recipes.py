"""Named experiment recipes behind the command-line harness.

Each recipe consumes a validated manifest, runs seeded computations, writes
CSV outputs plus a machine-readable summary and returns per-check pass/fail
results whose identifiers mirror the acceptance checklist.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import expansion as xp
from . import measures as ms
from ._rng import spawn_seeds
from .environment import (EnvironmentField, make_perturbation_law,
                          p_epsilon, two_atom_drift_law)
from .greenfn import verify_lemma_bounds
from .kernels import (TransitionKernel, potential_kernel_table_2d_ssrw,
                      potential_kernel_table_fourier,
                      potential_kernel_table_truncated, symmetric_kernel)
from .manifests import (CheckResult, ExperimentManifest, RecipeResult,
                        write_csv)

Z1 = (0, 1)


def _field_seed(manifest: ExperimentManifest, salt: int) -> int:
    return int(spawn_seeds(manifest.seed, 1, salt)[0])


def _field_echo(field: EnvironmentField) -> dict:
    return {"p0": field.p0.probs.tolist(), "epsilon": field.epsilon,
            "law_atoms": field.law.atoms.tolist(),
            "law_weights": field.law.weights.tolist(),
            "master_seed": field.master_seed}


def _out(manifest: ExperimentManifest, name: str) -> str:
    os.makedirs(manifest.out_dir, exist_ok=True)
    return os.path.join(manifest.out_dir, name)


# -- residual scaling --------------------------------------------------------

@dataclass
class ScalingReport:
    """Log-log slope of residuals against epsilon, noise-aware."""

    epsilons: np.ndarray
    residuals: np.ndarray
    noise_floors: np.ndarray
    used: np.ndarray
    slope: float
    slope_stderr: float
    noise_limited: bool

    def rows(self) -> list:
        return [[float(e), float(r), float(nf), bool(u)]
                for e, r, nf, u in zip(self.epsilons, self.residuals,
                                       self.noise_floors, self.used)]


def residual_scaling_report(epsilons, residuals, stderrs) -> ScalingReport:
    """Fit |residual| ~ c * eps^slope, ignoring noise-dominated points.

    Requires at least three epsilons spanning a factor of four.  A point is
    noise-limited when its residual is below twice its Monte Carlo error;
    with fewer than two clean points no slope is fitted and the report is
    marked noise-limited.
    """
    eps = np.asarray(epsilons, dtype=float)
    res = np.abs(np.asarray(residuals, dtype=float))
    se = np.asarray(stderrs, dtype=float)
    if eps.size < 3:
        raise ValueError("need at least three epsilon values")
    if eps.max() / eps.min() < 4.0 - 1e-12:
        raise ValueError("epsilon list must span at least a factor of 4")
    floors = 2.0 * se
    used = res > floors
    if used.sum() < 2:
        return ScalingReport(eps, res, floors, used, float("nan"),
                             float("nan"), True)
    lx = np.log(eps[used])
    ly = np.log(res[used])
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, rss, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    slope = float(coef[0])
    if used.sum() > 2:
        dof = used.sum() - 2
        s2 = float(rss[0]) / dof if rss.size else 0.0
        cov = s2 * np.linalg.inv(A.T @ A)
        slope_se = math.sqrt(max(cov[0, 0], 0.0))
    else:
        slope_se = float("nan")
    return ScalingReport(eps, res, floors, used, slope, slope_se, False)


# -- kernel-table ------------------------------------------------------------

def _reference_j_values() -> dict:
    refs = {(0, 0): 0.0}
    for s in (1, -1):
        refs[(0, s)] = -1.0
        refs[(s, 0)] = -1.0
        refs[(0, 2 * s)] = 8.0 / math.pi - 4.0
        refs[(2 * s, 0)] = 8.0 / math.pi - 4.0
        for t in (1, -1):
            refs[(s, t)] = -4.0 / math.pi
    return refs


def run_kernel_table(manifest: ExperimentManifest) -> RecipeResult:
    p = manifest.params
    radius = p["radius"]
    rec = potential_kernel_table_2d_ssrw(radius)
    fou = potential_kernel_table_fourier(symmetric_kernel(2), radius,
                                         p["fourier_grid"])
    tru = potential_kernel_table_truncated(symmetric_kernel(2),
                                           min(radius, p["cross_check_radius"]),
                                           p["truncated_n_max"])
    refs = _reference_j_values()
    rec_err = max(abs(rec(x) - v) for x, v in refs.items())
    fou_err = max(abs(fou(x) - v) for x, v in refs.items())
    checks = [
        CheckResult("kernel-table-recursion", rec_err <= 1e-9, rec_err, 1e-9,
                    "max error over the closed-form table"),
        CheckResult("kernel-table-fourier", fou_err <= 1e-4, fou_err, 1e-4,
                    "max error over the closed-form table"),
    ]
    # pairwise cross-method agreement within combined tolerance estimates
    worst = {"rec-fou": 0.0, "tru-fou": 0.0, "tru-rec": 0.0}
    margin = {k: -math.inf for k in worst}
    R = min(radius, p["cross_check_radius"])
    ok = True
    for x1 in range(-R, R + 1):
        for x2 in range(-R, R + 1):
            x = (x1, x2)
            idx = (x1 + tru.radius, x2 + tru.radius)
            t_t = tru.entry_tolerance[idx]
            fidx = (x1 + fou.radius, x2 + fou.radius)
            t_f = fou.entry_tolerance[fidx]
            pairs = {"rec-fou": (abs(rec(x) - fou(x)), rec.tolerance + t_f),
                     "tru-fou": (abs(tru(x) - fou(x)), t_t + t_f),
                     "tru-rec": (abs(tru(x) - rec(x)), t_t + rec.tolerance)}
            for k, (err, tol) in pairs.items():
                worst[k] = max(worst[k], err)
                margin[k] = max(margin[k], err - tol)
                ok = ok and err <= tol
    checks.append(CheckResult(
        "kernel-cross-method", ok, max(margin.values()), 0.0,
        f"max error-minus-combined-tolerance over |x|_inf <= {R}"))
    outputs = []
    for tbl, name in ((rec, "recursion"), (fou, "fourier"),
                      (tru, "truncated")):
        path = _out(manifest, f"kernel-table-{name}.csv")
        tbl.to_csv(path)
        outputs.append(path)
    return RecipeResult("kernel-table", manifest, checks, outputs,
                        {"recursion_max_err": rec_err,
                         "fourier_max_err": fou_err,
                         "pairwise_worst": worst})


# -- corollary2-verify -------------------------------------------------------

def run_corollary2_verify(manifest: ExperimentManifest) -> RecipeResult:
    p = manifest.params
    law = two_atom_drift_law()
    p0 = symmetric_kernel(2)
    J = potential_kernel_table_2d_ssrw(3)
    eps_list = sorted(float(e) for e in p["epsilon_list"])
    primary = float(p["primary_epsilon"])
    n_rep = p["n_replicas"]
    workers = manifest.workers
    rows = []
    per_eps = {}
    for i, eps in enumerate(eps_list):
        total = p["total_steps"] * (p["small_eps_factor"]
                                    if eps == eps_list[0] else 1)
        steps = -(-total // n_rep)
        field = EnvironmentField(p0, eps, law,
                                 _field_seed(manifest, 200 + i))
        burn = ms.default_burn_in(field)
        est_z1 = ms.cesaro_invariant_estimate(field, [Z1], steps + burn,
                                              burn, n_rep,
                                              seed=manifest.seed + i,
                                              workers=workers)
        est_o = ms.cesaro_invariant_estimate(field, [(0, 0)], steps + burn,
                                             burn, n_rep,
                                             seed=manifest.seed + 50 + i,
                                             workers=workers)
        pred = xp.box_density_predictions([Z1], law, eps, J)
        resid = est_z1.ratio - pred.densities
        per_eps[eps] = (est_z1, est_o, pred, resid)
        for box_tag, est, predicted in (("z1", est_z1, pred.densities),
                                        ("origin", est_o,
                                         np.ones(est_o.counts.size))):
            for code in range(est.counts.size):
                rows.append([eps, box_tag, code, int(est.counts[code]),
                             float(est.q_hat[code]),
                             float(est.p_analytic[code]),
                             float(est.ratio[code]),
                             float(est.ratio_stderr[code]),
                             float(predicted[code]),
                             float(est.ratio[code] - predicted[code])])
    path = _out(manifest, "corollary2-densities.csv")
    write_csv(path, ["epsilon", "box", "configuration_id", "count", "Q_hat",
                     "P", "ratio", "stderr", "predicted", "residual"], rows)

    est_z1, est_o, pred, resid = per_eps[primary]
    # per-configuration tolerances, each from its own jackknife stderr
    tol_density_vec = np.maximum(4.0 * est_z1.ratio_stderr,
                                 0.3 * primary ** 2 * abs(math.log(primary)))
    density_ok = bool(np.all(np.abs(resid) <= tol_density_vec))
    tol_density = float(tol_density_vec.min())
    max_resid = float(np.abs(resid).max())
    tol_origin_vec = np.maximum(4.0 * est_o.ratio_stderr, primary ** 1.5)
    origin_ok = bool(np.all(np.abs(est_o.ratio - 1.0) <= tol_origin_vec))
    tol_origin = float(tol_origin_vec.min())
    max_origin = float(np.abs(est_o.ratio - 1.0).max())
    # closed form and general first-order must coincide on this box
    closed = np.array([xp.pair_density_2d(law.centered_atoms()[a], primary)
                       for a in range(law.n_atoms)])
    gap_closed = float(np.abs(closed - per_eps[primary][2].densities).max())
    checks = [
        CheckResult("corollary2-density", density_ok,
                    max_resid, tol_density,
                    f"eps={primary}, worst configuration residual vs "
                    "tightest per-configuration tolerance"),
        CheckResult("corollary2-origin-trivial", origin_ok,
                    max_origin, tol_origin,
                    "single-site box at the origin stays first-order flat"),
        CheckResult("corollary2-closed-form", gap_closed <= 1e-12,
                    gap_closed, 1e-12,
                    "closed 2d form equals the general first-order density"),
    ]
    scal = residual_scaling_report(
        eps_list,
        [float(np.sqrt(np.mean(per_eps[e][3] ** 2))) for e in eps_list],
        [float(np.sqrt(np.mean(per_eps[e][0].ratio_stderr ** 2)))
         for e in eps_list])
    scal_ok = scal.noise_limited or scal.slope >= 1.5
    checks.append(CheckResult(
        "corollary2-residual-scaling", scal_ok,
        scal.slope if not scal.noise_limited else float("nan"), 1.5,
        "noise-limited" if scal.noise_limited else
        f"fitted exponent (stderr {scal.slope_stderr:.3g})"))
    spath = _out(manifest, "corollary2-scaling.csv")
    write_csv(spath, ["epsilon", "residual_rms", "noise_floor", "used"],
              scal.rows())
    return RecipeResult("corollary2-verify", manifest, checks, [path, spath],
                        {"slope": scal.slope,
                         "noise_limited": scal.noise_limited,
                         "primary_residuals": resid.tolist(),
                         "fields": {f"eps={e}": _field_echo(
                             EnvironmentField(p0, e, law,
                                              _field_seed(manifest, 200 + i)))
                             for i, e in enumerate(eps_list)}})


# -- velocity-verify ---------------------------------------------------------

def _rich_covariance_law():
    atoms = np.array([[0.5, -0.3, -0.1, -0.1],
                      [-0.2, 0.4, -0.3, 0.1],
                      [-0.3, -0.1, 0.5, -0.1]])
    return make_perturbation_law(atoms, np.array([0.3, 0.3, 0.4]))


def run_velocity_verify(manifest: ExperimentManifest) -> RecipeResult:
    p = manifest.params
    law = two_atom_drift_law()
    p0 = symmetric_kernel(2)
    checks = []
    rows = []
    oracle_gaps = []
    for i, eps in enumerate(float(e) for e in p["epsilon_list"]):
        field = EnvironmentField(p0, eps, law, _field_seed(manifest, 300 + i))
        est = ms.velocity_mc(field, p["n_steps"], p["n_replicas"],
                             seed=manifest.seed + i, burn_in=p["burn_in"],
                             workers=manifest.workers)
        J = potential_kernel_table_fourier(p_epsilon(field), 1)
        pred = xp.velocity_expansion(p0, law, eps, J)
        gap = abs(float(est.velocity[0] - pred.v[0]))
        tol = max(4.0 * float(est.stderr[0]), 5.0 * eps ** 2.5)
        checks.append(CheckResult(
            f"velocity-expansion-eps={eps}", gap <= tol, gap, tol,
            f"|v_hat . e1 - prediction| with v_hat from X_n/n"))
        for law_name, law_k in (("run", law), ("covariance-rich",
                                               _rich_covariance_law())):
            pe_k = TransitionKernel(p0.probs + eps * law_k.mean)
            J_k = potential_kernel_table_fourier(pe_k, 1)
            pred_k = xp.velocity_expansion(p0, law_k, eps, J_k)
            orac = xp.velocity_q_average_oracle(p0, law_k, eps, J_k)
            oracle_gaps.append(float(np.abs(orac - pred_k.v).max()))
        rows.append([eps, float(est.velocity[0]), float(est.stderr[0]),
                     float(est.velocity[1]), float(est.stderr[1]),
                     float(pred.v[0]), float(pred.d2[0]), gap, tol,
                     float(est.velocity_drift[0]),
                     float(est.stderr_drift[0])])
    worst_oracle = max(oracle_gaps)
    checks.append(CheckResult(
        "velocity-d2-oracle", worst_oracle <= 1e-10, worst_oracle, 1e-10,
        "vector d2 equals the brute-force one-site average"))
    path = _out(manifest, "velocity-verify.csv")
    write_csv(path, ["epsilon", "v1_hat", "stderr1", "v2_hat", "stderr2",
                     "v1_predicted", "d2_e1", "gap", "tolerance",
                     "v1_drift_variant", "stderr1_drift"], rows)
    return RecipeResult("velocity-verify", manifest, checks, [path],
                        {"oracle_gaps": oracle_gaps,
                         "fields": {f"eps={e}": _field_echo(
                             EnvironmentField(p0, e, law,
                                              _field_seed(manifest, 300 + i)))
                             for i, e in enumerate(
                                 float(x) for x in p["epsilon_list"])}})


# -- green-lemma-verify ------------------------------------------------------

def run_green_lemma_verify(manifest: ExperimentManifest) -> RecipeResult:
    p = manifest.params
    rep = verify_lemma_bounds(p["n_instances"], seed=manifest.seed,
                              delta=p["delta"], epsilon=p["epsilon"],
                              max_sites=p["max_sites"],
                              max_delta_pert=p["max_delta_pert"],
                              tol=p["tol"], workers=manifest.workers)
    checks = []
    for name, passed in rep.checks.items():
        n_fail = sum(1 for f in rep.failures if f["check"] == name)
        checks.append(CheckResult(
            f"green-{name}", passed, float(n_fail), 0.0,
            f"{rep.n_instances} seeded instances"))
    ratios = np.array(rep.halving_ratios)
    in_band = bool(ratios.size and np.all((ratios >= 3.0) & (ratios <= 5.0)))
    checks.append(CheckResult(
        "green-halving-ratio", in_band and rep.halving_skipped <= 5,
        float(np.median(ratios)) if ratios.size else float("nan"), 4.0,
        f"range [{ratios.min():.3g}, {ratios.max():.3g}], "
        f"{rep.halving_skipped} degenerate skipped"))
    checks.append(CheckResult(
        "green-factorized-remainder-singleton",
        rep.factorized_residual_singleton <= 1e-9,
        rep.factorized_residual_singleton, 1e-9,
        "product form is an identity for single-site perturbations"))
    rows = [[r["seed"], str(r["sites"]), str(r["y"]), str(r["yp"]),
             float(r["remainder"]), float(r["bound"]),
             float(r["halving_ratio"]), float(r["factorized_residual"])]
            for r in rep.instances]
    path = _out(manifest, "green-lemma-instances.csv")
    write_csv(path, ["env_seed", "sites", "y", "yp", "remainder", "bound",
                     "halving_ratio", "factorized_residual"], rows)
    return RecipeResult(
        "green-lemma-verify", manifest, checks, [path],
        {"factorized_residual_multi": rep.factorized_residual_multi,
         "predictor_variants_max_gap": rep.predictor_variants_max_gap,
         "failures": rep.failures})


# -- mu-delta-vs-cesaro ------------------------------------------------------

def run_mu_delta_vs_cesaro(manifest: ExperimentManifest) -> RecipeResult:
    p = manifest.params
    law = two_atom_drift_law()
    drifted = TransitionKernel(np.array([0.4, 0.1, 0.25, 0.25]))
    eps = float(p["epsilon"])
    field = EnvironmentField(drifted, eps, law, _field_seed(manifest, 400))
    workers = manifest.workers
    mu = ms.mu_delta_estimate(field, [Z1], p["delta"], p["n_traj"],
                              seed=manifest.seed, workers=workers)
    burn = ms.default_burn_in(field)
    ces = ms.cesaro_invariant_estimate(field, [Z1],
                                       p["cesaro_steps"] + burn, burn,
                                       p["cesaro_replicas"],
                                       seed=manifest.seed + 1,
                                       workers=workers)
    diff = mu.ratio - ces.ratio
    comb = np.hypot(mu.ratio_stderr, ces.ratio_stderr)
    worst_z = float(np.abs(diff / comb).max())
    checks = [CheckResult(
        "mu-delta-vs-cesaro", bool(np.all(np.abs(diff) <= 4.0 * comb)),
        worst_z, 4.0,
        f"worst |ratio difference| in combined-sigma units at "
        f"delta={p['delta']}")]

    # occupation identity at the identity delta with a centered cylinder
    sym_field = EnvironmentField(symmetric_kernel(2), 0.1,
                                 two_atom_drift_law(),
                                 _field_seed(manifest, 401))
    f_values = np.array([1.0, 0.0]) - sym_field.law.weights[0]
    idr = ms.occupation_identity_check(sym_field, [Z1], f_values,
                                       p["identity_delta"],
                                       p["identity_n_traj"],
                                       p["identity_n_env"],
                                       seed=manifest.seed + 2,
                                       workers=workers)
    checks.append(CheckResult(
        "occupation-identity", abs(idr.gap) <= 4.0 * idr.combined_se,
        abs(idr.z_score), 4.0,
        f"centered cylinder, traj={idr.trajectory_side:.6g} "
        f"green={idr.green_side:.6g}"))
    rows = [[int(c), float(mu.ratio[c]), float(mu.ratio_stderr[c]),
             float(ces.ratio[c]), float(ces.ratio_stderr[c]),
             float(diff[c]), float(comb[c])]
            for c in range(mu.counts.size)]
    path = _out(manifest, "mu-delta-vs-cesaro.csv")
    write_csv(path, ["configuration_id", "mu_ratio", "mu_stderr",
                     "cesaro_ratio", "cesaro_stderr", "difference",
                     "combined_stderr"], rows)
    return RecipeResult(
        "mu-delta-vs-cesaro", manifest, checks, [path],
        {"empty_window_fraction": mu.meta["empty_window_fraction"],
         "tail_mass": mu.meta["tail_mass_identity_normalized"],
         "inclusive_mass": mu.meta["inclusive_mass_identity_normalized"],
         "fields": {"cesaro_and_mu": _field_echo(field),
                    "identity": _field_echo(sym_field)},
         "identity": {"trajectory": idr.trajectory_side,
                      "green": idr.green_side, "gap": idr.gap,
                      "combined_se": idr.combined_se,
                      "uncentered_gap": idr.uncentered_gap,
                      "uncentered_gap_predicted":
                          idr.uncentered_gap_predicted}})


# -- kalikow-jdelta ----------------------------------------------------------

def run_kalikow_jdelta(manifest: ExperimentManifest) -> RecipeResult:
    p = manifest.params
    law = two_atom_drift_law()
    p0 = symmetric_kernel(2)
    eps = float(p["epsilon"])
    field = EnvironmentField(p0, eps, law, _field_seed(manifest, 500))
    zs = [(0, 0), (1, 0)]
    es = [(1, 0), (0, 1)]
    A = [(0, 0), (1, 0)]
    reports = ms.kalikow_j_delta_sweep(field, p["deltas"], (0, 0), zs, es,
                                       A, p["n_env"], p["tol"],
                                       seed=manifest.seed,
                                       workers=manifest.workers)
    checks = []
    rows = []
    for (z, e), rep in sorted(reports.items()):
        tag = f"z={z},e={e}"
        final_gap = abs(float(rep.gaps[-1]))
        tol_gap = max(4.0 * float(rep.stderr[-1]), 10.0 * eps)
        checks.append(CheckResult(
            f"kalikow-trend-{tag}", rep.monotone_trend(), final_gap, tol_gap,
            "gaps shrink toward the potential-kernel limit along deltas"))
        checks.append(CheckResult(
            f"kalikow-final-gap-{tag}", final_gap <= tol_gap, final_gap,
            tol_gap, f"limit {rep.j_limit:.6g}"))
        for di, dl in enumerate(rep.deltas):
            rows.append([str(z), str(e), float(dl),
                         float(rep.estimates[di]), float(rep.stderr[di]),
                         float(rep.j_limit), float(rep.gaps[di])])
    path = _out(manifest, "kalikow-jdelta.csv")
    write_csv(path, ["z", "e", "delta", "estimate", "stderr",
                     "j_limit", "gap"], rows)
    return RecipeResult("kalikow-jdelta", manifest, checks, [path],
                        {"n_env": p["n_env"], "tol": p["tol"],
                         "fields": {"run": _field_echo(field)}})


# -- ballisticity-check ------------------------------------------------------

def run_ballisticity_check(manifest: ExperimentManifest) -> RecipeResult:
    p = manifest.params
    law = two_atom_drift_law()
    p0 = symmetric_kernel(2)
    L, M = p["L"], p["M"]
    strong = EnvironmentField(p0, float(p["epsilon"]), law,
                              _field_seed(manifest, 600))
    weak = EnvironmentField(p0, 0.0, law, _field_seed(manifest, 601))
    rep_s = ms.polynomial_condition_check(strong, L, M, p["n_traj"],
                                          seed=manifest.seed,
                                          step_cap=p["step_cap"],
                                          workers=manifest.workers)
    rep_w = ms.polynomial_condition_check(weak, L, M, p["n_traj"],
                                          seed=manifest.seed + 1,
                                          step_cap=p["step_cap"],
                                          workers=manifest.workers)
    checks = [
        CheckResult("ballistic-back-exit", rep_s.p_back < rep_s.bound,
                    rep_s.p_back, rep_s.bound,
                    f"strong drift field, L={L}, {rep_s.n_capped} capped"),
        CheckResult("diffusive-back-exit", rep_w.p_back > 0.1,
                    rep_w.p_back, 0.1,
                    "disorder-free symmetric field fails the condition"),
    ]
    rows = [["strong", rep_s.n_traj, rep_s.n_back, rep_s.n_front,
             rep_s.n_capped, rep_s.p_back, rep_s.bound],
            ["symmetric", rep_w.n_traj, rep_w.n_back, rep_w.n_front,
             rep_w.n_capped, rep_w.p_back, rep_w.bound]]
    path = _out(manifest, "ballisticity-check.csv")
    write_csv(path, ["field", "n_traj", "n_back", "n_front", "n_capped",
                     "p_back", "bound"], rows)
    return RecipeResult(
        "ballisticity-check", manifest, checks, [path],
        {"c0_min_reading": rep_s.c0_min_reading,
         "c0_max_reading": rep_s.c0_max_reading,
         "fields": {"strong": _field_echo(strong),
                    "symmetric": _field_echo(weak)},
         "L_ge_c0_min": rep_s.meta["L_ge_c0_min"],
         "L_ge_c0_max": rep_s.meta["L_ge_c0_max"]})


RECIPES = {
    "kernel-table": run_kernel_table,
    "corollary2-verify": run_corollary2_verify,
    "velocity-verify": run_velocity_verify,
    "green-lemma-verify": run_green_lemma_verify,
    "mu-delta-vs-cesaro": run_mu_delta_vs_cesaro,
    "kalikow-jdelta": run_kalikow_jdelta,
    "ballisticity-check": run_ballisticity_check,
}

#: acceptance-criterion id -> check-id prefixes that decide it (criterion 7,
#: exact-solver normalization, is enforced inside every exact solve and
#: asserted by the property test in the acceptance module)
CRITERIA_MAP = {
    "criterion-1": ["kernel-table-recursion", "kernel-table-fourier"],
    "criterion-2": ["kernel-cross-method"],
    "criterion-3": ["corollary2-density", "corollary2-closed-form",
                    "corollary2-residual-scaling"],
    "criterion-4": ["corollary2-origin-trivial"],
    "criterion-5": ["velocity-expansion", "velocity-d2-oracle"],
    "criterion-6": ["green-"],
    "criterion-8": ["occupation-identity"],
    "criterion-9": ["mu-delta-vs-cesaro"],
    "criterion-10": ["kalikow-"],
    "criterion-11": ["ballistic-back-exit", "diffusive-back-exit"],
}


def _criteria_verdicts(checks) -> dict:
    verdicts = {}
    for crit, prefixes in CRITERIA_MAP.items():
        hits = [c for c in checks
                if any(c.id.startswith(p) for p in prefixes)]
        if hits:
            verdicts[crit] = all(c.passed for c in hits)
    return verdicts


def run_recipe(manifest: ExperimentManifest) -> RecipeResult:
    """Validate the manifest, run its recipe, write summary.json."""
    manifest.validate()
    result = RECIPES[manifest.recipe](manifest)
    result.summary["criteria"] = _criteria_verdicts(result.checks)
    os.makedirs(manifest.out_dir, exist_ok=True)
    spath = os.path.join(manifest.out_dir, f"{manifest.recipe}-summary.json")
    result.write_summary(spath)
    result.outputs.append(spath)
    mpath = os.path.join(manifest.out_dir, f"{manifest.recipe}-manifest.json")
    manifest.to_json(mpath)
    result.outputs.append(mpath)
    return result
