"""Batch experiment runner: every module exposed as a subcommand emitting
deterministic CSV. Plotting is external; configs are JSON.

Exit codes: 0 success, 1 a declared output assertion failed, 2 usage error,
3 invalid payload (machine-readable error JSON on stderr).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import stats

from . import divergence as dv
from . import equilibrium, mirror, nonstationary, plant, prob, solvers
from .errors import ConfigurationError, ValidationError
from .mirror import UncertaintyModel
from .prob import JointPmf2, Pmf, PrivacyMapping

SUBCOMMANDS = ("mi-tradeoff", "secrecy-gap", "convergence-cdf", "mfg", "lohe",
               "stackelberg", "nash", "plant", "divergence")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MIRRORWYNER_THREADS", "1")))
    except ValueError:
        raise ValidationError("MIRRORWYNER_THREADS: must be an integer")


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config: malformed JSON ({exc})")
    except OSError as exc:
        raise ValidationError(f"config: unreadable ({exc})")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if np.isnan(v):
        raise ValidationError("output: NaN cell with no tag")
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


def _write(out_path, header, rows):
    lines = [header]
    lines.extend(",".join(_fmt(c) if not isinstance(c, str) else c for c in row)
                 for row in rows)
    text = "\n".join(lines) + "\n"
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", newline="\n") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Batch experiment: iterations-to-converge CDFs, relaxed vs unrelaxed
# ---------------------------------------------------------------------------

def _cdf_variants(cfg):
    eps = tuple(cfg.get("eps", solvers.DEFAULT_EPS))
    variants = [("relaxed", dict(relaxed=True, eps=eps)),
                ("unrelaxed", dict(relaxed=False, eps=eps))]
    if cfg.get("mode", "two") == "three":
        tight = tuple(e / 10 for e in eps)
        variants.append(("relaxed_tight", dict(relaxed=True, eps=tight)))
    return variants


def run_convergence_cdf(cfg, seed, rep):
    inst = mirror.MirrorGameInstance.from_jsonable(cfg["instance"]) \
        if "instance" in cfg else mirror.reference_binary_instance()
    n_seeds = int(cfg.get("n_seeds", 40))
    budget = int(cfg.get("budget", 60))
    mag = float(cfg.get("b_magnitude", 0.5))
    seeds = list(cfg.get("seeds", range(seed, seed + n_seeds)))
    variants = _cdf_variants(cfg)

    def one(args):
        name, kw, s = args
        u = UncertaintyModel(magnitude=mag, seed=s)
        try:
            _, trace = solvers.greedy_solve(inst, u, budget=budget, seed=s, **kw)
            return (name, s, trace.iterations, trace.converged, trace.feasible, "")
        except ArithmeticError as exc:
            return (name, s, -1, False, False, type(exc).__name__)

    jobs = [(name, kw, s) for name, kw in variants for s in seeds]
    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    results.sort(key=lambda r: (r[0], r[1]))

    rows = [("run", name, s, iters, int(conv), int(bool(feas)), tag or "ok")
            for name, s, iters, conv, feas, tag in results]
    per = {name: np.array([r[2] for r in results if r[0] == name and r[2] >= 0])
           for name, _ in variants}
    grid = np.unique(np.concatenate([v for v in per.values() if v.size]))
    for t in grid:
        row = ["cdf", "", int(t), "", "", "", ""]
        for k, (name, _) in enumerate(variants):
            frac = float(np.mean(per[name] <= t)) if per[name].size else 0.0
            row[3 + k] = frac
        rows.append(tuple(row))
    ok = True
    if per["relaxed"].size and per["unrelaxed"].size:
        confirm = stats.ks_2samp(per["relaxed"], per["unrelaxed"],
                                 alternative="greater")
        violate = stats.ks_2samp(per["relaxed"], per["unrelaxed"],
                                 alternative="less")
        ok = violate.pvalue >= 0.05
        rows.append(("summary", "ks_dominates", "", confirm.statistic,
                     confirm.pvalue, int(ok), ""))
    rows.append(("summary", "completed", "",
                 *[per[name].size for name, _ in variants[:2]],
                 len(jobs), ""))
    header = "record,variant,value,col_a,col_b,col_c,tag"
    return header, rows, 0 if ok else 1


# ---------------------------------------------------------------------------
# Frontier and gap sweeps over the binary reference instance
# ---------------------------------------------------------------------------

def _binary_mappings(resolution):
    """All 2x2 row-stochastic mappings on a 1/resolution grid."""
    ticks = np.linspace(0.0, 1.0, resolution + 1)
    return [PrivacyMapping(np.array([[a, 1 - a], [b, 1 - b]]))
            for a in ticks for b in ticks]


def _const_virtual(inst):
    rows = np.zeros((inst.x_marginal(0).alphabet_size, inst.virtual_alphabet))
    rows[:, 0] = 1.0
    return PrivacyMapping(rows)


def run_mi_tradeoff(cfg, seed, rep):
    inst = mirror.MirrorGameInstance.from_jsonable(cfg["instance"]) \
        if "instance" in cfg else mirror.reference_binary_instance()
    mags = [float(b) for b in cfg.get("b_magnitudes", (0.1, 0.5))]
    n_grid = int(cfg.get("grid_points", 6))
    res = int(cfg.get("resolution", 16))
    theta = float(cfg.get("theta", 0.9))
    n_samples = int(cfg.get("n_samples", 64))
    if n_grid < 2:
        raise ValidationError("mi-tradeoff: grid_points must be >= 2")
    q = 0
    i_sx = prob.mutual_information(inst.joints[q])
    h_x = prob.entropy(inst.x_marginal(q))
    const_v = _const_virtual(inst)
    mappings = _binary_mappings(res)
    utilities, leaks = [], []
    for m in mappings:
        asg = mirror.TwinAssignment((m,) * inst.q_count, (const_v,) * inst.q_count)
        j3 = prob.markov_compose(inst.joints[q], m)
        utilities.append(prob.mutual_information(j3.margin_bc()))
        leaks.append(asg)
    sampled = {}
    for mag in mags:
        draws = np.zeros((len(mappings), n_samples))
        for mi, asg in enumerate(leaks):
            rng = np.random.default_rng(seed + 1000 * mi)
            draws[mi] = [mirror.sample_leakage(inst, asg, q, mag, rng)
                         for _ in range(n_samples)]
        sampled[mag] = draws
    utilities = np.asarray(utilities)
    bounds = np.linspace(0.0, i_sx, n_grid)
    rows = []
    for mag in mags:
        for gi, bound in enumerate(bounds):
            chance = np.mean(sampled[mag] <= bound + mirror.NULL_TOL, axis=1)
            feas = chance >= theta
            if np.any(feas):
                best = float(utilities[feas].max())
                rows.append((mag, gi, bound / i_sx if i_sx > 0 else 0.0,
                             best / h_x if h_x > 0 else 0.0, best, 1))
            else:
                rows.append((mag, gi, bound / i_sx if i_sx > 0 else 0.0,
                             0.0, 0.0, 0))
    header = "b_magnitude,grid_index,leakage_norm,utility_norm,utility_bits,feasible"
    return header, rows, 0


def run_secrecy_gap(cfg, seed, rep):
    inst = mirror.MirrorGameInstance.from_jsonable(cfg["instance"]) \
        if "instance" in cfg else mirror.reference_binary_instance()
    mags = [float(b) for b in cfg.get("b_magnitudes", (0.6, 0.7))]
    n_grid = int(cfg.get("grid_points", 5))
    res = int(cfg.get("resolution", 16))
    n_samples = int(cfg.get("n_samples", 64))
    if n_grid < 2:
        raise ValidationError("secrecy-gap: budget grid must be >= 2")
    q = 0
    p_x = inst.x_marginal(q)
    ident = PrivacyMapping.identity(p_x.alphabet_size)
    power_max = float(np.max(inst.symbol_values[q] ** 2))
    budgets = np.linspace(0.0, power_max, n_grid)
    gaps = []
    j_id = prob.markov_compose(inst.joints[q], ident)
    utility = prob.mutual_information(j_id.margin_bc())
    for v in _binary_mappings(res):
        asg = mirror.TwinAssignment((ident,) * inst.q_count, (v,) * inst.q_count)
        exposure = mirror.superposed_exposure(inst, asg, q)
        power = mirror.virtual_power(v, p_x, inst.symbol_values[q])
        gaps.append((power, utility - exposure))
    gaps = np.asarray(gaps)
    # leakage chance under the identity original, per panel
    asg0 = mirror.TwinAssignment((ident,) * inst.q_count,
                                 (_const_virtual(inst),) * inst.q_count)
    rows = []
    for mag in mags:
        rng = np.random.default_rng(seed)
        draws = np.array([mirror.sample_leakage(inst, asg0, q, mag, rng)
                          for _ in range(n_samples)])
        leak_chance = float(np.mean(draws <= inst.gamma0[q] + mirror.NULL_TOL))
        for gi, budget in enumerate(budgets):
            feas = gaps[:, 0] <= budget + 1e-12
            best = float(gaps[feas, 1].max())
            rows.append((mag, gi, budget / power_max if power_max > 0 else 0.0,
                         best, leak_chance, 1))
    header = "b_magnitude,grid_index,budget_norm,gap_bits,leakage_chance,solved"
    return header, rows, 0


# ---------------------------------------------------------------------------
# Module dispatch subcommands
# ---------------------------------------------------------------------------

def _default_mfg_payload():
    n_x, x_min, x_max, s0 = 101, -3.0, 3.0, 0.5
    xs = np.linspace(x_min, x_max, n_x)
    dens = np.exp(-xs**2 / (2 * s0**2))
    dens /= dens.sum() * (xs[1] - xs[0])
    return {"x_min": x_min, "x_max": x_max, "n_x": n_x, "n_t": 100,
            "dt": 0.01, "sigma": 0.1, "initial_density": list(dens)}


def run_mfg(cfg, seed, rep):
    payload = cfg.get("grid", _default_mfg_payload())
    grid = nonstationary.MfgGrid.from_jsonable(payload)
    sol = nonstationary.mfg_solve(grid, tol=float(cfg.get("tol", 1e-6)),
                                  max_sweeps=int(cfg.get("max_sweeps", 50)),
                                  damping=float(cfg.get("damping", 0.5)))
    print(json.dumps({"converged": bool(sol.converged),
                      "sweeps": len(sol.residuals),
                      "final_residual": float(sol.residuals[-1])}),
          file=sys.stderr)
    rows = [(k, x, sol.value[k, i], sol.density[k, i])
            for k in range(grid.n_t) for i, x in enumerate(grid.xs)]
    return "k,x,J,P_df", rows, 0


def run_lohe(cfg, seed, rep):
    q = int(cfg.get("q", 4))
    d = int(cfg.get("d", 2))
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(q, d)) + 1j * rng.normal(size=(q, d))
    states /= np.linalg.norm(states, axis=1, keepdims=True)
    h = rng.normal(size=(q, d, d))
    hams = (h + h.transpose(0, 2, 1)) / 2
    if cfg.get("common_hamiltonian", True):
        hams = np.broadcast_to(hams[0], (q, d, d)).copy()
    sys_ = nonstationary.LoheSystem(
        states=states, hamiltonians=hams, hbar=float(cfg.get("hbar", 1.0)),
        alpha=float(cfg.get("alpha", 1.0)),
        coupling=cfg.get("coupling", "aligning"))
    dt = float(cfg.get("dt", 1e-2))
    steps = int(cfg.get("steps", 500))
    traj = nonstationary.lohe_integrate(sys_, dt, steps)
    stride = max(1, int(cfg.get("stride", 10)))
    rows = []
    for k in range(0, steps + 1, stride):
        norms = np.linalg.norm(traj[k], axis=1)
        rows.append((k, nonstationary.sync_order(traj[k]),
                     float(norms.min()), float(norms.max())))
    return "step,sync_order,min_norm,max_norm", rows, 0


def run_stackelberg(cfg, seed, rep):
    if "laws" in cfg:
        inst = nonstationary.StackelbergInstance(
            leader_laws=tuple(np.asarray(l, dtype=float) for l in cfg["laws"]),
            payoffs=np.asarray(cfg["payoffs"], dtype=float),
            leader_drift=None if cfg.get("drift") is None
            else np.asarray(cfg["drift"], dtype=float))
    else:
        rng = np.random.default_rng(seed)
        n_f, n_u, n_laws = (int(cfg.get(k, v)) for k, v in
                            (("n_follower", 6), ("n_leader_state", 4), ("n_laws", 8)))
        laws = tuple(rng.dirichlet(np.ones(n_u), size=n_f) for _ in range(n_laws))
        inst = nonstationary.StackelbergInstance(
            leader_laws=laws, payoffs=rng.normal(size=(n_f, n_u)))
    rows = []
    for stage in cfg.get("stages", [0]):
        li, a, v = nonstationary.stackelberg_solve(inst, stage=int(stage))
        rows.append((int(stage), li, a, v))
    return "stage,leader_law,follower_action,value", rows, 0


def run_nash(cfg, seed, rep):
    if "weights" in cfg:
        game = equilibrium.KCutGame.from_jsonable(cfg)
    else:
        rng = np.random.default_rng(seed)
        n = int(cfg.get("n", 8))
        w = rng.uniform(0, 1, size=(n, n))
        w = (w + w.T) / 2
        np.fill_diagonal(w, 0.0)
        game = equilibrium.KCutGame(w, int(cfg.get("k", 3)))
    init = equilibrium.StrategyProfile(tuple(cfg.get("init", [0] * game.n)))
    res = equilibrium.best_response_dynamics(game, init)
    is_nash, worst = equilibrium.verify_nash(game, res.profile)
    rows = [("|".join(str(c) for c in res.profile.colors), res.rounds,
             int(res.converged), int(is_nash),
             equilibrium.potential(game, res.profile))]
    return "colors,rounds,converged,is_nash,potential", rows, 0


def run_plant(cfg, seed, rep):
    if "a1" in cfg:
        p = plant.LinearPlant.from_jsonable(cfg)
    else:
        rng = np.random.default_rng(seed)
        n = int(cfg.get("n", 4))
        p = plant.LinearPlant(rng.normal(size=(n, n)) / n,
                              rng.normal(size=(n, 1)),
                              rng.normal(size=(1, n)),
                              rng.normal(size=(1, 1)))
    c_rank, controllable = plant.controllability_rank(p.a1, p.a2)
    o_rank, observable = plant.observability_rank(p.a1, p.a3)
    rho = plant.closed_loop_spectral_radius(p)
    rows = [(p.n, c_rank, int(controllable), o_rank, int(observable),
             rho, int(rho < 1))]
    return "n,ctrb_rank,controllable,obsv_rank,observable,spectral_radius,stable", rows, 0


def run_divergence(cfg, seed, rep):
    if "joint" in cfg:
        model = dv.LatentModel(np.asarray(cfg["joint"], dtype=float),
                               *(float(cfg.get(f"theta{i}", 1.0)) for i in range(4)))
    else:
        rng = np.random.default_rng(seed)
        model = dv.LatentModel(rng.dirichlet(np.ones(2 * 3 * 4 * 2)).reshape(2, 3, 4, 2))
    n_z = model.p_z().size
    acc = tuple(cfg.get("accessible", range(n_z - 1)))
    inacc = tuple(cfg.get("inaccessible", [n_z - 1]))
    g1 = float(cfg.get("g1", 0.0))
    g2 = float(cfg.get("g2", np.log2(model.joint.shape[3])))
    rep_d = dv.cmi_decomposition_report(model)
    rows = [("per_z", z, c) for z, c in enumerate(rep_d.per_z)]
    rows.append(("total", "", rep_d.total))
    res = dv.constrained_cmi_max(model, dv.AccessMask(acc, inacc), g1, g2)
    rows.append(("equivocation", "", res.equivocation))
    rows.append(("feasible", "", int(res.feasible)))
    if res.feasible:
        rows.append(("cmi_max", "", res.cmi))
        rows.extend(("weight", z, w) for z, w in enumerate(res.weights))
    return "metric,index,value", rows, 0


RUNNERS = {
    "convergence-cdf": run_convergence_cdf,
    "mi-tradeoff": run_mi_tradeoff,
    "secrecy-gap": run_secrecy_gap,
    "mfg": run_mfg,
    "lohe": run_lohe,
    "stackelberg": run_stackelberg,
    "nash": run_nash,
    "plant": run_plant,
    "divergence": run_divergence,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mirrorwyner")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)
        p.add_argument("--repetitions", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        if args.repetitions < 1:
            raise ValidationError("repetitions: must be >= 1")
        runner = RUNNERS[args.subcommand]
        all_rows, header, status = [], None, 0
        for rep in range(args.repetitions):
            header, rows, code = runner(cfg, args.seed + rep, rep)
            status = max(status, code)
            all_rows.extend((rep,) + tuple(r) for r in rows)
        _write(args.out, "rep," + header, all_rows)
        return status
    except (ValidationError, ConfigurationError, KeyError) as exc:
        field = str(exc).split(":", 1)[0].strip("'\" ")
        print(json.dumps({"error": type(exc).__name__, "field": field,
                          "message": str(exc)}), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
