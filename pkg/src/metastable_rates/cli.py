"""Command line entry point: ``metastable-rates {rates,graphs,simulate,verify}``.

Exit codes: 0 success, 1 verification failure (or a module error that is
not a configuration problem), 2 configuration error, 3 step budget
exceeded.  Tables are tab separated and start with the resolved
configuration as ``#`` comment lines; ``summary.json`` holds the same
content in machine-readable form.  Outputs carry no timestamps, so equal
configs and seeds give byte-identical files.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import IO

import numpy as np
import yaml

from . import __version__
from .config import ExperimentConfig, load
from .errors import (BudgetExceeded, ConfigInvalid, GraphError, IdentityMismatch, LandscapeError,
                     MetastableError, RateError, RegimeMismatch, StepUnstable)

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3
DEFAULT_SIM_OUT = "simulate-out"


# output helpers -------------------------------------------------------------


def _num(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def _header(resolved: dict) -> str:
    text = yaml.safe_dump(_jsonable(resolved), sort_keys=True, default_flow_style=None, width=100)
    return "".join(f"# {line}\n" for line in text.splitlines())


def write_table(path: Path, resolved: dict, columns: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(_header(resolved))
        fh.write("\t".join(columns) + "\n")
        for r in rows:
            fh.write("\t".join(c if isinstance(c, str) else _num(c) for c in r) + "\n")


def write_json(path: Path, obj: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolved(cfg: ExperimentConfig | None, args, **extra) -> dict:
    out = {"package_version": __version__, "subcommand": args.command}
    if cfg is not None:
        out["config"] = cfg.resolved()
    out.update(extra)
    return out


def _out_dir(args, cfg: ExperimentConfig | None, default: str | None = None) -> Path | None:
    d = args.out or (cfg.out if cfg is not None else None) or default
    if d is None:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


# rates ----------------------------------------------------------------------


def _rate_inputs(cfg: ExperimentConfig):
    from .rates import RateInputs

    c = None if cfg.c is None else float(cfg.c)
    if cfg.kind == "landscape":
        L = cfg.build_landscape()
        A = cfg.set_A(L)
        if A is None:
            raise ConfigInvalid("rates need a set A (set.A or set.case)", "set")
        return RateInputs.from_landscape(L, A, cfg.f_value(), c=c), L
    if cfg.kind == "raw_V":
        rv = cfg.raw_V
        if "infA_fV" not in rv:
            raise ConfigInvalid("required for rates", "raw_V.infA_fV")
        V = np.array([[float(v) for v in row] for row in rv["V"]])
        two = None if "infA_2fV" not in rv else [float(v) for v in rv["infA_2fV"]]
        return RateInputs.from_V(V, [float(v) for v in rv["infA_fV"]], two, c=c,
                                 stable=rv.get("stable")), None
    rw = cfg.raw_W
    two = None if "infA_2fV" not in rw else [float(v) for v in rw["infA_2fV"]]
    return RateInputs.supplied([float(v) for v in rw["infA_fV"]], [float(v) for v in rw["W_rel"]],
                               float(rw["W1"]), [float(v) for v in rw["W_pair"]], float(rw["h1"]),
                               infA_2fV=two, c=c), None


def cmd_rates(args, cfg: ExperimentConfig, out: IO) -> int:
    from .rates import doublewell_case_rate, variance_decay_rates

    inputs, L = _rate_inputs(cfg)
    rep = variance_decay_rates(inputs)
    print(rep.format(), file=out)
    summary = {"report": rep.to_dict()}
    if L is not None and L.name == "double_well" and cfg.case is not None:
        p = L.params
        b = None if cfg.case == "I" else float(inputs.infA_fV[1])
        closed = doublewell_case_rate(p["h_L"], p["h_R"], cfg.case, b)
        form = {"I": "h_L - 2 h_R", "II": "h_L + 2 (b - h_R)", "III": "h_L + 2 (b - h_R)",
                "IV": "h_L + (b - h_R)"}[cfg.case]
        print(f"closed form   {form} = {round(closed, 10) + 0.0:g}  (case {cfg.case})", file=out)
        summary["closed_form"] = {"case": cfg.case, "formula": form, "b": b, "value": closed}
    d = _out_dir(args, cfg)
    if d is not None:
        res = _resolved(cfg, args)
        write_table(d / "rates.tsv", res, ["j", "W", "W_rel", "W_pair", "R1", "R2", "R3"], rep.table_rows())
        write_json(d / "summary.json", {"resolved": res, **summary})
    return EXIT_OK


# graphs ---------------------------------------------------------------------


def cmd_graphs(args, cfg: ExperimentConfig, out: IO) -> int:
    from .graphcalc import (TransitionMatrix, enumerate_wgraphs, expected_visits, min_wgraph_weight,
                            stationary_from_graphs, stationary_linear, taboo_probability)
    from .landscape import find_equilibria, quasipotential_matrix

    if cfg.kind == "raw_W":
        raise ConfigInvalid("graphs need a landscape or raw_V block", "raw_W")
    if cfg.kind == "landscape":
        L = cfg.build_landscape()
        eq = find_equilibria(L)
        V = quasipotential_matrix(L, eq).V
        print("equilibria    " + "  ".join(f"O_{k + 1}={x:.6g}{'' if s else '*'}"
                                           for k, (x, s) in enumerate(zip(eq.points, eq.stable))), file=out)
    else:
        V = np.array([[float(v) for v in row] for row in cfg.raw_V["V"]])
    l = V.shape[0]
    sets = cfg.graphs.get("W") or ([[j] for j in range(1, l + 1)] + [[1, j] for j in range(2, l + 1)])
    rows = []
    summary: dict = {"V": V, "root_sets": []}
    for roots1 in sets:
        if any(r > l for r in roots1):
            raise ConfigInvalid(f"root index outside 1..{l}", "graphs.W")
        roots = [r - 1 for r in roots1]
        res = min_wgraph_weight(V, roots)
        label = "{" + ",".join(map(str, roots1)) + "}"
        argmins = [g.describe() for g in res.argmin_graphs]
        print(f"W={label:<10} min weight {_num(res.weight)}  graphs {res.count_enumerated}  "
              f"minimizers {len(argmins)}  [{res.method}]", file=out)
        for s in argmins:
            print(f"    {s}", file=out)
        rows.append((label, res.weight, res.count_enumerated, len(argmins), res.method, " | ".join(argmins)))
        entry = {"W": roots1, "weight": res.weight, "count": res.count_enumerated, "method": res.method,
                 "argmin": argmins}
        if cfg.graphs.get("list"):
            entry["all"] = [(g.describe(), g.weight(V)) for g in enumerate_wgraphs(l, roots)]
        summary["root_sets"].append(entry)
    if "P" in cfg.graphs:
        P = TransitionMatrix(cfg.graphs["P"])
        lam_g, lam_l = stationary_from_graphs(P), stationary_linear(P)
        if lam_g != lam_l:
            raise IdentityMismatch(f"stationary law {lam_g} vs {lam_l}")
        chain = {"stationary": [str(x) for x in lam_g], "visits": {}, "taboo": {}}
        print("stationary    " + "  ".join(str(x) for x in lam_g), file=out)
        for j in range(l):
            e1, ej = expected_visits(P, j)
            chain["visits"][j + 1] = {"E_1 N_j": str(e1), "E_j N_j": str(ej)}
            print(f"visits j={j + 1}   E_1 N_j = {e1}   E_j N_j = {ej}", file=out)
        for i in range(l):
            for j in range(l):
                if i != j:
                    chain["taboo"][f"{i + 1}->{j + 1}"] = str(taboo_probability(P, i, j))
        summary["chain"] = chain
    d = _out_dir(args, cfg)
    if d is not None:
        res = _resolved(cfg, args)
        write_table(d / "graphs.tsv", res, ["W", "min_weight", "n_graphs", "n_minimizers", "method", "minimizers"],
                    rows)
        write_json(d / "summary.json", {"resolved": res, **summary})
    return EXIT_OK


# simulate -------------------------------------------------------------------


def cmd_simulate(args, cfg: ExperimentConfig, out: IO) -> int:
    from .landscape import find_equilibria
    from .rates import RateInputs, variance_decay_rates
    from .simulator.cycles import build_multicycles
    from .simulator.sde import DriftTable, Integrand
    from .simulator.stats import (arrhenius_fit, ols, return_time_law, run_replicas, summarize_eps,
                                  wald_checks)

    L = cfg.build_landscape()
    if not cfg.eps:
        raise ConfigInvalid("simulate needs an eps grid", "eps")
    sim = dict(cfg.simulate)
    if args.max_steps is not None:
        sim["max_steps"] = args.max_steps
    seed = cfg.seed if args.seed is None else args.seed
    if seed < 0:
        raise ConfigInvalid("must be nonnegative", "--seed")
    n_cycles = sim.get("n_cycles")
    c = None if cfg.c is None else float(cfg.c)
    if (n_cycles is None) == (c is None):
        raise ConfigInvalid("give exactly one of c (horizon mode) or simulate.n_cycles", "c")
    eq = find_equilibria(L)
    drift = DriftTable.from_landscape(L)
    A = cfg.set_A(L)
    f = cfg.f_value()
    delta = float(cfg.delta)
    formula = None
    h1 = w = None
    if c is not None and A is not None:
        inputs = RateInputs.from_landscape(L, A, f, c=c, eq=eq)
        inputs.require_horizon()
        formula = variance_decay_rates(inputs).variance_rate
        h1, w = inputs.h1, inputs.w
    eps_list = [float(e) for e in cfg.eps]
    if "eps_index" in sim:
        eps_list = [eps_list[sim["eps_index"]]]
    resolved = _resolved(cfg, args, seed=seed, max_steps=sim.get("max_steps"),
                         equilibria=[float(x) for x in eq.points], stable=[bool(s) for s in eq.stable])
    cyc_rows, rep_rows, eps_rows, reg_rows = [], [], [], []
    per_eps = []
    n_incomplete = 0
    for k, eps in enumerate(eps_list):
        g = Integrand(eps, A, f, L)
        kw = dict(landscape=L, eps=eps, delta=delta, seed=seed, eq=eq, drift=drift, c=c,
                  n_cycles=n_cycles, max_steps=sim.get("max_steps"), burn_in=sim.get("burn_in", 1),
                  complete_last=sim.get("complete_last", False),
                  dt=None if "dt" not in sim else float(sim["dt"]))
        try:
            results = run_replicas(kw, g, [k * 1_000_000 + r for r in range(cfg.replicas)], jobs=args.jobs)
        except ValueError as e:
            raise ConfigInvalid(str(e), "delta") from e
        entry: dict = {"eps": eps, "dt": results[0].dt, "T": results[0].T}
        for r in results:
            n_incomplete += r.incomplete
            tab = r.cycles
            dur = tab.duration
            for i in range(len(tab)):
                cyc_rows.append([eps, r.replica, i + 1, tab.start[i] * r.dt, dur[i], tab.S[i],
                                 *tab.visits[i].tolist(), bool(tab.truncated[i]),
                                 "-".join(str(s + 1) for s in tab.seqs[i])])
            rep_rows.append([eps, r.replica, r.steps_total, len(tab), r.N_T, r.rho, r.lower_sum, r.upper_sum,
                             r.incomplete])
        pooled = np.concatenate([r.cycles.duration for r in results])
        entry["n_cycles"] = int(len(pooled))
        entry["n_incomplete"] = int(sum(r.incomplete for r in results))
        if len(pooled) >= 100:
            law = return_time_law(pooled, eps)
            entry["return_time"] = law.to_dict()
        if len(pooled):
            entry["mean_duration"] = float(pooled.mean())
            entry["mean_duration_se"] = float(pooled.std(ddof=1) / math.sqrt(len(pooled))) if len(pooled) > 1 else None
        if c is not None and len(results) >= 2 and all(r.N_T is not None for r in results):
            try:
                s = summarize_eps(results)
                entry["estimators"] = s.__dict__
            except (ValueError, ZeroDivisionError, FloatingPointError):
                pass
            if len(results) >= 20:
                entry["wald"] = wald_checks(results, landscape=L, g=g).to_dict()
        if cfg.m is not None:
            stats_m = []
            for r in results:
                mc = build_multicycles(r.cycles, float(cfg.m), eps, seed * 7919 + r.replica, h1, w)
                stats_m.extend((m.member_count, m.duration, m.integral_S) for m in mc)
            if stats_m:
                arr = np.array(stats_m, dtype=float)
                entry["multicycles"] = {"count": len(arr), "mean_members": float(arr[:, 0].mean()),
                                        "mean_duration": float(arr[:, 1].mean()),
                                        "mean_S": float(arr[:, 2].mean())}
        per_eps.append(entry)
        est = entry.get("estimators", {})
        eps_rows.append([eps, entry["dt"], entry["T"], len(results), entry["n_incomplete"], entry["n_cycles"],
                         entry.get("mean_duration"), est.get("ES1"), est.get("rho_mean"), est.get("T_var"),
                         est.get("rate"), est.get("rate_se"),
                         entry.get("return_time", {}).get("ks_pvalue"),
                         entry.get("return_time", {}).get("c_tilde")])
        reg_rows.append([eps, 1.0 / eps, math.log(entry["mean_duration"]) if entry.get("mean_duration") else None,
                         est.get("rate"), est.get("rate_se")])
        print(f"eps={eps:g}  replicas {len(results)}  cycles {entry['n_cycles']}  "
              f"rate {_num(est.get('rate'))}  incomplete {entry['n_incomplete']}", file=out)
    summary: dict = {"resolved": resolved, "per_eps": per_eps, "formula_rate": formula,
                     "incomplete_replicas": n_incomplete}
    rates = [e.get("estimators", {}).get("rate") for e in per_eps]
    if len(per_eps) >= 3 and all(r is not None and math.isfinite(r) for r in rates):
        ses = np.array([e["estimators"]["rate_se"] for e in per_eps])
        summary["rate_regression"] = ols(eps_list, rates, 1.0 / ses**2 if np.all(ses > 0) else None)
    means = [e.get("mean_duration") for e in per_eps]
    if len(per_eps) >= 2 and all(m for m in means):
        summary["arrhenius"] = arrhenius_fit(eps_list, means)
    d = _out_dir(args, cfg, DEFAULT_SIM_OUT)
    l = eq.l
    write_table(d / "cycles.tsv", resolved,
                ["eps", "replica", "cycle", "start_time", "duration", "S"] + [f"N_{j + 1}" for j in range(l)]
                + ["truncated", "sequence"], cyc_rows)
    write_table(d / "replicas.tsv", resolved,
                ["eps", "replica", "steps", "complete_cycles", "N_T", "rho", "lower_sum", "upper_sum",
                 "incomplete"], rep_rows)
    write_table(d / "eps_summary.tsv", resolved,
                ["eps", "dt", "T", "replicas", "incomplete", "cycles", "mean_duration", "ES1", "rho_mean",
                 "T_var", "rate", "rate_se", "ks_pvalue", "c_tilde"], eps_rows)
    write_table(d / "regression.tsv", resolved, ["eps", "inv_eps", "log_mean_duration", "rate", "rate_se"],
                reg_rows)
    write_json(d / "summary.json", summary)
    print(f"wrote {d}", file=out)
    if n_incomplete:
        raise BudgetExceeded(f"{n_incomplete} replica(s) INCOMPLETE after reaching the step budget; "
                             f"partial results written to {d}")
    return EXIT_OK


# verify ---------------------------------------------------------------------

GROUPS = {"all": list(range(1, 13)), "exact": [1, 2, 3, 4, 5, 6, 7, 8, 12], "statistical": [9, 10, 11]}


def cmd_verify(args, cfg: ExperimentConfig | None, out: IO) -> int:
    from .acceptance import CRITERIA, example_diff, run_criteria

    targets = args.targets or ["all"]
    numbers: list[int] = []
    ok = True
    for t in targets:
        if t in ("example1", "example2"):
            good, lines = example_diff(t)
            print(f"{t}: {'exact match' if good else 'MISMATCH'}", file=out)
            for line in lines:
                print("  " + line, file=out)
            ok &= good
        elif t in GROUPS:
            numbers += GROUPS[t]
        elif t.isdigit() and int(t) in CRITERIA:
            numbers.append(int(t))
        else:
            raise ConfigInvalid(f"unknown target {t!r}; use example1, example2, all, exact, statistical "
                                f"or a criterion number 1-12", "targets")
    numbers = sorted(set(numbers))
    results = run_criteria(numbers, jobs=args.jobs, echo=lambda s: print(s, file=out, flush=True)) if numbers else []
    ok &= all(r.passed for r in results)
    d = _out_dir(args, cfg)
    if d is not None and results:
        res = _resolved(cfg, args, targets=targets)
        write_table(d / "verify.tsv", res, ["criterion", "name", "passed", "seconds", "budget", "detail"],
                    [(r.number, r.name, r.passed, r.seconds, r.budget, r.detail) for r in results])
    print(f"verify: {'all passed' if ok else 'FAILED'}", file=out)
    return EXIT_OK if ok else EXIT_VERIFY


# entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metastable-rates", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--max-steps", type=int, help="per-replica step budget")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for replicas")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("rates", parents=[common], help="decay-rate report")
    sub.add_parser("graphs", parents=[common], help="W-graph minima and exact chain quantities")
    sub.add_parser("simulate", parents=[common], help="simulate replicas and write cycle tables")
    v = sub.add_parser("verify", parents=[common], help="golden tables and acceptance criteria")
    v.add_argument("targets", nargs="*", help="example1, example2, all, exact, statistical or 1-12")
    return p


def _exit_for(err: MetastableError) -> int:
    if isinstance(err, BudgetExceeded):
        return EXIT_BUDGET
    if isinstance(err, IdentityMismatch):
        return EXIT_VERIFY
    if isinstance(err, (ConfigInvalid, LandscapeError, RateError, StepUnstable, RegimeMismatch, GraphError)):
        return EXIT_CONFIG
    return EXIT_VERIFY


def main(argv=None, stdout: IO | None = None, stderr: IO | None = None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("config error: --jobs: must be >= 1", file=err)
        return EXIT_CONFIG
    if args.max_steps is not None and args.max_steps < 1:
        print("config error: --max-steps: must be >= 1", file=err)
        return EXIT_CONFIG
    try:
        cfg = load(args.config) if args.config else None
        if cfg is None and args.command != "verify":
            raise ConfigInvalid("--config is required for this command", "--config")
        handler = {"rates": cmd_rates, "graphs": cmd_graphs, "simulate": cmd_simulate, "verify": cmd_verify}
        return handler[args.command](args, cfg, out)
    except ConfigInvalid as e:
        print(f"config error: {e}", file=err)
        return EXIT_CONFIG
    except MetastableError as e:
        code = _exit_for(e)
        kind = {EXIT_BUDGET: "budget exceeded", EXIT_CONFIG: "input error"}.get(code, "error")
        print(f"{kind} [{e.code}] during {args.command}: {e}", file=err)
        return code


if __name__ == "__main__":
    sys.exit(main())
