"""Experiment runner: named reproduction recipes over JSON configs.

Each recipe wires the simulation and PDE modules into one named check
bundle, writes machine-readable artifacts under <out>/<recipe>/<hash>/ and
returns a ResultRecord. Exit codes: 0 all checks pass, 1 some check failed,
2 configuration error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bbm, kpp, point_process, sbm, skeleton, stats
from .errors import ConfigInvalid, SkelexError, UnknownRecipe
from .mechanism import (
    BranchingMechanism,
    binary_mechanism,
    check_tail_moment_equivalence,
    linear_growth_mechanism,
    mechanism_bank,
    mechanism_from_json,
    mixture_mechanism,
    power_tail_mechanism,
)
from .stats import CheckResult

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ExperimentSpec:
    recipe: str
    mechanism_blob: dict
    params: dict
    seed: int

    def config_hash(self) -> str:
        payload = {"recipe": self.recipe, "mechanism": self.mechanism_blob,
                   "params": self.params, "seed": self.seed}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def build_mechanism(self) -> BranchingMechanism:
        return mechanism_from_json(self.mechanism_blob)


@dataclass
class ResultRecord:
    recipe: str
    config_hash: str
    checks: list[CheckResult]
    artifacts: list[str]
    wall_time: float

    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {"recipe": self.recipe, "config_hash": self.config_hash,
                "checks": [c.to_json() for c in self.checks],
                "artifacts": self.artifacts, "wall_time": self.wall_time}


def load_spec(blob: dict) -> ExperimentSpec:
    if not isinstance(blob, dict):
        raise ConfigInvalid("config must be a JSON object")
    recipe = blob.get("recipe")
    if recipe not in RECIPES:
        raise UnknownRecipe(f"unknown recipe {recipe!r}; see `skelex list`")
    if "seed" not in blob or not isinstance(blob["seed"], int):
        raise ConfigInvalid("an integer `seed` is required (no wall-clock seeding)")
    mech_blob = blob.get("mechanism", {"alpha": 1.0, "beta": 1.0, "pi": {"kind": "zero"}})
    try:
        mechanism_from_json(mech_blob)
    except (KeyError, ValueError, SkelexError) as exc:
        raise ConfigInvalid(f"bad mechanism block: {exc}") from exc
    params = blob.get("params", {})
    if not isinstance(params, dict):
        raise ConfigInvalid("`params` must be an object")
    return ExperimentSpec(recipe=recipe, mechanism_blob=mech_blob,
                          params=params, seed=blob["seed"])


# ---------------------------------------------------------------------------
# recipes
# ---------------------------------------------------------------------------

def _box_phi(a: float, b: float, h: float):
    return lambda x: h * ((np.asarray(x) > a) & (np.asarray(x) <= b))


def _recipe_skeleton_derive(spec, mech, out_dir) -> tuple[list[CheckResult], list[str]]:
    law = skeleton.derive_offspring_law(mech)
    residual = skeleton.verify_generating_identity(law, mech)
    path = out_dir / "offspring_law.json"
    path.write_text(json.dumps(law.to_json(), indent=2))
    checks = [CheckResult("generating-identity-residual", residual, 1e-8,
                          residual < 1e-8, {"q": law.q, "max_k": law.max_k()})]
    return checks, [str(path)]


def _recipe_kpp_duality(spec, mech, out_dir):
    p = spec.params
    n = int(p.get("replicas", 20000))
    t = float(p.get("t", 2.0))
    law = skeleton.derive_offspring_law(mech)
    cfg = bbm.BbmConfig(law=law, initial=bbm.SinglePoint(0.0), horizon=t,
                        observation_times=(t,), seed=spec.seed)
    phi = _box_phi(-1.0, 1.0, 0.5)
    est, se = bbm.kpp_duality_estimate(cfg, phi, t, n)
    grid = kpp.Grid1D.from_spacing(-12.0 - SQRT2 * t, 12.0 + SQRT2 * t, 0.02, 0.01)
    fld = kpp.solve_kpp(mech, kpp.StepData.box(-1.0, 1.0, 0.5), t, grid)[-1]
    pde = float(fld.at(0.0))
    gap = abs(est - pde)
    tol = 3.0 * se + 1e-3
    checks = [CheckResult("duality-gap", gap, tol, gap < tol,
                          {"mc": est, "stderr": se, "pde": pde, "replicas": n})]
    return checks, []


def _recipe_martingales(spec, mech, out_dir):
    p = spec.params
    n = int(p.get("replicas", 20000))
    times = tuple(p.get("times", (1.0, 2.0, 4.0)))
    law = skeleton.derive_offspring_law(mech)
    cfg = bbm.BbmConfig(law=law, initial=bbm.SinglePoint(0.0), horizon=times[-1],
                        observation_times=times, seed=spec.seed)
    traj = bbm.martingale_trajectories(cfg, n)
    rep_dm = stats.martingale_test(traj["dM"], traj["times"], 0.0)
    rep_m = stats.martingale_test(traj["M"], traj["times"], 1.0)
    drift = traj["dM"] + 0.01 * traj["times"][:, None] * 50
    rep_neg = stats.martingale_test(drift, traj["times"], 0.0)
    checks = [
        CheckResult("derivative-martingale-z", float(np.max(np.abs(rep_dm.z_scores))),
                    4.0, rep_dm.all_clear(), rep_dm.to_json()),
        CheckResult("additive-martingale-z", float(np.max(np.abs(rep_m.z_scores))),
                    4.0, rep_m.all_clear(), rep_m.to_json()),
        CheckResult("drifted-control-flagged", float(np.max(np.abs(rep_neg.z_scores))),
                    4.0, bool(np.any(rep_neg.flagged)), {}),
    ]
    return checks, []


def _recipe_front_constant(spec, mech, out_dir):
    p = spec.params
    r_schedule = tuple(p.get("r_schedule", (5.0, 10.0, 20.0)))
    est = kpp.c_star(mech, r_schedule=r_schedule)
    x_shift = 0.5
    shifted = kpp.compute_C(mech, kpp.StepData.half_line(-x_shift),
                            r_schedule=r_schedule[-1:])
    base_last = kpp.compute_C(mech, kpp.StepData.half_line(0.0),
                              r_schedule=r_schedule[-1:])
    ratio = shifted.c_r[-1] / (math.exp(SQRT2 * x_shift) * base_last.c_r[-1])
    path = out_dir / "front_constants.json"
    path.write_text(json.dumps(est.to_json(), indent=2))
    checks = [
        CheckResult("c-r-converged", float(abs(est.c_r[-1] - est.c_r[-2]) / est.value),
                    0.05, est.converged, est.to_json()),
        CheckResult("shift-covariance", abs(ratio - 1.0), 0.03,
                    abs(ratio - 1.0) < 0.03, {"ratio": ratio, "x": x_shift}),
    ]
    return checks, [str(path)]


def _recipe_travelling_wave(spec, mech, out_dir):
    p = spec.params
    T = float(p.get("T", 60.0))
    dx = float(p.get("dx", 0.02))
    wave = kpp.travelling_wave(mech, T_large=T, dx=dx, dt=dx)
    mono = bool(np.all(np.diff(wave.w) <= 1e-9))
    edge_ok = wave.w[0] > 1.0 - 1e-5 and wave.w[-1] < 1e-5
    path = out_dir / "wave_profile.csv"
    with open(path, "w") as fh:
        fh.write("x,w\n")
        for x, w in zip(wave.x, wave.w):
            fh.write(f"{x!r},{w!r}\n")
    checks = [
        CheckResult("wave-residual", wave.residual, 5e-3, wave.residual < 5e-3,
                    wave.to_json()),
        CheckResult("wave-monotone-limits", 0.0, 0.0, mono and edge_ok,
                    {"monotone": mono, "edges": edge_ok}),
    ]
    return checks, [str(path)]


def _recipe_max_law(spec, mech, out_dir):
    p = spec.params
    n = int(p.get("replicas", 20000))
    t_pair = tuple(p.get("times", (4.0, 7.0)))
    law = skeleton.derive_offspring_law(mech)
    cfg = bbm.BbmConfig(law=law, initial=bbm.SinglePoint(0.0), horizon=t_pair[-1],
                        observation_times=t_pair, seed=spec.seed, chunk_size=512)
    res = bbm.run_bbm_ensemble(cfg, n)
    cstar = kpp.c_star(mech, r_schedule=(5.0, 10.0, 20.0)).value
    bank = res.dmart[-1]
    ks = []
    for it, t in enumerate(t_pair):
        shifted = res.max_pos[it] - kpp.bramson_centering(t)
        cdf = stats.gumbel_mixture_cdf_fn(bank, cstar)
        ks.append(stats.ks_distance(shifted, cdf))
    checks = [CheckResult("gumbel-ks-decreasing", ks[-1], ks[0], ks[-1] < ks[0],
                          {"ks": ks, "times": list(t_pair), "c_star": cstar})]
    return checks, []


def _recipe_poissonization(spec, mech, out_dir):
    p = spec.params
    n = int(p.get("replicas", 20000))
    t = float(p.get("t", 1.0))
    eps = float(p.get("eps", 0.1))
    cfg = sbm.make_sbm_config(mech, eps, t, (t,), spec.seed)
    res = sbm.run_sbm_ensemble(cfg, n, keep_final_particles=True)
    rid, pos = res.particles
    order = np.argsort(rid, kind="stable")
    rid, pos = rid[order], pos[order]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed,
                                                       spawn_key=(0xFEED,)))
    z_rid, z_pos = sbm.poissonize_batch(rid, pos, n, eps, rng)
    g = _box_phi(-2.0, 2.0, 0.6)
    lz = np.exp(-np.bincount(z_rid, weights=g(z_pos), minlength=n))
    lx = np.exp(-np.bincount(rid, weights=eps * (-np.expm1(-g(pos))), minlength=n))
    diff = stats.paired_difference(lz, lx)
    xnorm = eps * res.count[-1]
    znorm = np.bincount(z_rid, minlength=n).astype(float)
    slope, se = stats.poisson_slope(xnorm, znorm)
    checks = [
        CheckResult("poissonization-paired-ci", abs(diff.value), 3 * diff.stderr,
                    abs(diff.value) <= 3 * diff.stderr,
                    {"mean_diff": diff.value, "stderr": diff.stderr}),
        CheckResult("mass-regression-slope", abs(slope - 1.0), 3 * se,
                    abs(slope - 1.0) <= 3 * se, {"slope": slope, "stderr": se}),
    ]
    return checks, []


def _recipe_extremal_process(spec, mech, out_dir):
    p = spec.params
    n = int(p.get("replicas", 20000))
    t = float(p.get("t", 6.0))
    eps = float(p.get("eps", 0.1))
    res = sbm.run_sbm_terminal_quadratic(mech, eps, t, n, spec.seed,
                                         keep_particles=True)
    rid, pos = res.particles
    phi = _box_phi(-2.0, 0.0, 0.5)
    mt = kpp.bramson_centering(t)
    est = stats.laplace_mc_flat(rid, pos - mt, np.full(pos.shape, eps), n, phi)
    grid = kpp.Grid1D.from_spacing(-mt - 18.0, SQRT2 * t + 16.0, 0.02, 0.01)
    fld = kpp.solve_kpp(mech, kpp.StepData.box(-2.0, 0.0, 0.5), t, grid)[-1]
    pde = float(math.exp(-fld.at(-mt)))
    gap = abs(est.value - pde)
    tol = 3 * est.stderr + 0.03
    checks = [CheckResult("extremal-laplace-vs-oracle", gap, tol, gap < tol,
                          {"mc": est.value, "stderr": est.stderr, "pde": pde})]
    return checks, []


def _recipe_decoration_bank(spec, mech, out_dir):
    p = spec.params
    n = int(p.get("replicas", 20000))
    t = float(p.get("t", 5.0))
    law = skeleton.derive_offspring_law(mech)
    cfg = bbm.BbmConfig(law=law, initial=bbm.PoissonField.at_point(0.0, 1.0),
                        horizon=t, observation_times=(t,), seed=spec.seed)
    run = bbm.sample_conditioned_decorations(cfg, t, 0.0, n)
    ok_support = all(s.decoration.max_position() <= 1e-9
                     and abs(s.decoration.max_position()) < 1e-9
                     for s in run.accepted)
    grid = kpp.Grid1D.from_spacing(-SQRT2 * t - 25.0, SQRT2 * t + 16.0, 0.02, 0.01)
    fld = kpp.solve_kpp(mech, kpp.StepData.half_line(0.0), t, grid)[-1]
    p_pde = 1.0 - math.exp(-float(fld.at(-SQRT2 * t)))
    se = math.sqrt(p_pde * (1 - p_pde) / n)
    bank = point_process.DecorationBank(
        samples=[s.decoration for s in run.accepted],
        tag=f"skeleton decoration @ t={t}",
        meta={"t": t, "acceptance_rate": run.acceptance_rate})
    path = out_dir / "decoration_bank.csv"
    bank.to_csv(path)
    checks = [
        CheckResult("decoration-support", 0.0, 0.0, ok_support,
                    {"n_accepted": len(run.accepted)}),
        CheckResult("acceptance-vs-oracle", abs(run.acceptance_rate - p_pde),
                    3 * se, abs(run.acceptance_rate - p_pde) <= 3 * se + 2e-3,
                    {"mc": run.acceptance_rate, "pde": p_pde}),
    ]
    return checks, [str(path)]


def _recipe_conditioned_sbm(spec, mech, out_dir):
    p = spec.params
    n = int(p.get("replicas", 8000))
    t = float(p.get("t", 5.0))
    eps = float(p.get("eps", 0.1))
    run = sbm.sample_conditioned_sbm(mech, eps, t, 0.0, n, spec.seed)
    ok = all(s.mass_decoration.max_position() <= 1e-9 for s in run.accepted)
    xs = np.array([s.mass_decoration.integrate(lambda v: (v > -3.0) & (v <= 0.0))
                   for s in run.accepted])
    zs = np.array([float(np.sum((s.skeleton_decoration.positions > -3.0)
                                & (s.skeleton_decoration.positions <= 0.0)))
                   if len(s.skeleton_decoration) else 0.0 for s in run.accepted])
    slope = float(np.sum(xs * zs) / np.sum(xs * xs))
    se = math.sqrt(float(np.sum(xs ** 3)) / float(np.sum(xs * xs)) ** 2)
    checks = [
        CheckResult("conditioned-support", 0.0, 0.0, ok,
                    {"n_accepted": len(run.accepted),
                     "acceptance_rate": run.acceptance_rate}),
        CheckResult("poisson-intensity-slope", abs(slope - 1.0), 3 * se,
                    abs(slope - 1.0) <= 3 * se, {"slope": slope, "stderr": se}),
    ]
    return checks, []


def _recipe_dichotomy(spec, mech, out_dir):
    p = spec.params
    lam_schedule = tuple(p.get("lambda_schedule", (1e2, 1e3)))
    t = float(p.get("t", 1.0))
    res_ok = kpp.tilde_u(binary_mechanism(), kpp.StepData(pieces=()), t,
                         lambda_schedule=lam_schedule)
    res_bad = kpp.tilde_u(linear_growth_mechanism(), kpp.StepData(pieces=()), t,
                          lambda_schedule=lam_schedule)
    checks = [
        CheckResult("quadratic-converges", float(res_ok.sup_diffs[-1]), 1e-4,
                    not res_ok.diverged, {"sup_diffs": res_ok.sup_diffs}),
        CheckResult("linear-growth-diverges", float(res_bad.core_norms[-1]),
                    float("inf"), res_bad.diverged,
                    {"core_norms": res_bad.core_norms}),
    ]
    return checks, []


def _recipe_moment_equivalence(spec, mech, out_dir):
    rows = []
    ok = True
    for name, m in mechanism_bank().items():
        rep = check_tail_moment_equivalence(m, 0.5)
        rows.append({"mechanism": name, **rep.to_json()})
        ok = ok and rep.agree
    heavy = power_tail_mechanism(1.5)
    for beta in (0.25, 0.75):
        rep = check_tail_moment_equivalence(heavy, beta)
        rows.append({"mechanism": "power_tail", **rep.to_json()})
        ok = ok and rep.agree
    path = out_dir / "equivalence.json"
    path.write_text(json.dumps(rows, indent=2))
    checks = [CheckResult("classifications-agree", 0.0, 0.0, ok, {"rows": rows})]
    return checks, [str(path)]


RECIPES = {
    "skeleton-derive": (_recipe_skeleton_derive,
                        "derive the skeleton rate/offspring table and verify the generating identity",
                        "skeleton branching law q(F(s)-s) = psi(1-s)"),
    "kpp-duality": (_recipe_kpp_duality,
                    "Monte Carlo product functional of the skeleton vs the semilinear-PDE solution",
                    "branching-process representation of the semilinear heat equation"),
    "martingales": (_recipe_martingales,
                    "z-tests of the additive/derivative martingale means plus a drifted control",
                    "critical additive and derivative martingales"),
    "front-constant": (_recipe_front_constant,
                       "front-constant table with convergence flag and shift covariance",
                       "weighted tail integrals of the front and their limit"),
    "travelling-wave": (_recipe_travelling_wave,
                        "long-time co-moving profile, wave ODE residual, tail constant",
                        "monotone travelling wave at the critical speed"),
    "max-law-gumbel": (_recipe_max_law,
                       "KS trend of the recentred maximum against the martingale-shifted Gumbel mixture",
                       "randomly shifted Gumbel limit of the recentred maximum"),
    "poissonization": (_recipe_poissonization,
                       "paired identity between skeleton draws and mass-measure Laplace functionals",
                       "conditional skeleton is Poisson with the mass measure as intensity"),
    "extremal-process": (_recipe_extremal_process,
                         "recentred mass-measure Laplace functional vs the PDE oracle",
                         "extremal process of the measure-valued process"),
    "decoration-bank": (_recipe_decoration_bank,
                        "conditioned decoration samples: support checks, acceptance rate, CSV bank",
                        "population seen from its maximum under a high-maximum condition"),
    "conditioned-sbm": (_recipe_conditioned_sbm,
                        "conditioned mass measure with poissonized skeleton; Poisson-intensity slope",
                        "conditioned limit of the mass measure near its support maximum"),
    "dichotomy-4.13": (_recipe_dichotomy,
                       "large-weight limit converges for quadratic, diverges for the linear-growth example",
                       "finite vs infinite support-maximum dichotomy"),
    "appendix-A2": (_recipe_moment_equivalence,
                    "finite/infinite agreement of the jump tail moment and its companion integral",
                    "tail-moment equivalence for the offspring law"),
}


def list_recipes() -> list[dict]:
    return [{"name": name, "description": desc, "anchor": anchor}
            for name, (_, desc, anchor) in RECIPES.items()]


def run_experiment(spec: ExperimentSpec, out_root: Path) -> ResultRecord:
    fn, _, _ = RECIPES[spec.recipe]
    mech = spec.build_mechanism()
    out_dir = Path(out_root) / spec.recipe / spec.config_hash()
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    checks, artifacts = fn(spec, mech, out_dir)
    wall = time.perf_counter() - t0
    record = ResultRecord(recipe=spec.recipe, config_hash=spec.config_hash(),
                          checks=checks, artifacts=artifacts, wall_time=wall)
    (out_dir / "result.json").write_text(json.dumps(record.to_json(), indent=2))
    return record


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="skelex",
                                     description="experiment runner for the "
                                                 "skeleton/extremal-process toolkit")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run a recipe from a JSON config")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", type=Path, default=Path("out"))
    p_val = sub.add_parser("validate", help="validate a JSON config")
    p_val.add_argument("config", type=Path)
    sub.add_parser("list", help="list registered recipes")
    args = parser.parse_args(argv)

    if args.cmd == "list":
        for row in list_recipes():
            print(f"{row['name']:18s} {row['description']}  [{row['anchor']}]")
        return 0
    try:
        blob = json.loads(Path(args.config).read_text())
        spec = load_spec(blob)
    except (OSError, json.JSONDecodeError, ConfigInvalid, UnknownRecipe) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.cmd == "validate":
        print(f"ok: recipe={spec.recipe} hash={spec.config_hash()}")
        return 0
    try:
        record = run_experiment(spec, args.out)
    except SkelexError as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return 2
    for c in record.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"[{status}] {c.check_id}: stat={c.statistic:.6g} thr={c.threshold:.6g}")
    return 0 if record.passed() else 1


if __name__ == "__main__":
    sys.exit(main())
