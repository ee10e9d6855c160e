"""Command line front end: ``bbelab <command> [--config FILE] [overrides]``.

Exit codes: 0 success, 1 failed check or numerical failure, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback

import numpy as np

from .errors import BbeError, ConfigError, NumericalError, SolverStagnationError, ValidationError
from .io import Manifest, load_config, write_csv, write_json

log = logging.getLogger("bbelab")

COMMANDS = ("moments", "constants", "coercivity", "identities", "transport", "relax",
            "simulate", "limit-study", "selftest")


def _params(cfg):
    from .equilibrium import EquilibriumParams
    try:
        return EquilibriumParams(cfg["equilibrium.lambda"], cfg["equilibrium.temp"])
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def _grid(cfg):
    from .vgrid import build_grid
    return build_grid(cfg["grid.n_per_axis"], cfg["grid.v_max"])


def _out(cfg, name):
    return os.path.join(cfg["outputs.directory"], name)


# ------------------------------------------------------------ commands

def cmd_moments(cfg, man):
    from .equilibrium import moments, oracle_table
    p = _params(cfg)
    g = _grid(cfg)
    tab = moments(p, g)
    rep = {"grid": tab.as_dict(), "oracle": oracle_table(p.lam).as_dict()}
    print(json.dumps({"m0": tab.m0, "m2": tab.m2, "m4": tab.m4, "m6": tab.m6, "resolved": tab.resolved}))
    write_json(_out(cfg, "moments.json"), rep, man.hash)
    return 0


def cmd_constants(cfg, man):
    from .equilibrium import certified_bound, closed_form_constants
    p = _params(cfg)
    pc = closed_form_constants(p)
    norms = np.ones(3)
    rep = {"constants": pc.as_dict(),
           "certified_bound_unit_norms": {"O2": certified_bound(p, 2, norms, variant="O"),
                                          "P2": certified_bound(p, 2, norms, variant="P")}}
    print(json.dumps(rep["constants"]))
    write_json(_out(cfg, "constants.json"), rep, man.hash)
    return 0


def cmd_coercivity(cfg, man):
    from .collision import CollisionContext, linearized_matrix
    from .equilibrium import closed_form_constants
    p = _params(cfg)
    g = _grid(cfg)
    Lop = linearized_matrix(CollisionContext(g, p.temp ** 2), p)
    rep = Lop.spectral_report()
    pc = closed_form_constants(p)
    rep["bracket"] = [pc.coercivity_lower / 100, 100 * pc.coercivity_upper]
    rep["in_bracket"] = rep["bracket"][0] <= rep["spectral_gap"] <= rep["bracket"][1]
    rep["symmetry_error"] = Lop.symmetry_error()
    print(json.dumps({k: rep[k] for k in ("n_near_null", "spectral_gap", "spectral_radius", "in_bracket")}))
    write_json(_out(cfg, "coercivity.json"), rep, man.hash)
    return 0 if rep["in_bracket"] and rep["n_near_null"] == 5 else 1


def cmd_identities(cfg, man):
    from .acceptance import identity_suite
    p = _params(cfg)
    rows = identity_suite(cfg["grid.n_per_axis"], cfg["grid.v_max"], p.lam, p.temp)
    for name, val, tol, ok in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:34s} {val:.3e}  (tol {tol:.0e})")
    write_csv(_out(cfg, "identities.csv"), ["identity", "value", "tolerance", "pass"],
              [(n, v, t, int(o)) for n, v, t, o in rows], man.hash)
    return 0 if all(r[3] for r in rows) else 1


def cmd_transport(cfg, man):
    from .collision import CollisionContext, linearized_matrix
    from .spectraldiag import KernelBasis
    from .transport import coefficients, flux_functions, radial_form_check, solve_flux_inverse
    p = _params(cfg)
    g = _grid(cfg)
    Lop = linearized_matrix(CollisionContext(g, p.temp ** 2), p)
    basis = KernelBasis(g, p)
    inv = solve_flux_inverse(Lop, flux_functions(basis))
    coef = coefficients(inv, basis.table)
    rep = radial_form_check(inv)
    d = coef.as_dict()
    d["alpha_spread"], d["beta_spread"] = rep["alpha_spread"], rep["beta_spread"]
    d["rotation_residual"] = rep["rotation_residual"]
    print(json.dumps({k: d[k] for k in ("nu", "kappa1", "kappa2", "mu", "kappa")}))
    write_json(_out(cfg, "transport.json"), d, man.hash)
    write_csv(_out(cfg, "radial_profiles.csv"), ["radius", "alpha", "alpha_spread", "beta", "beta_spread"],
              rep["profile"], man.hash)
    return 0


def cmd_relax(cfg, man):
    from .kinetic_solver import SolverConfig, bi_temperature_datum, relax_homogeneous, relaxation_report
    p = _params(cfg)
    sc = SolverConfig(epsilon=cfg["solver.epsilon"], formulation="absolute", params=p,
                      n_per_axis=cfg["grid.n_per_axis"], v_max=cfg["grid.v_max"], dt=cfg["solver.dt"],
                      t_end=cfg["solver.t_end"], snapshot_stride=cfg["solver.snapshot_stride"],
                      conservative_correction=cfg["solver.conservative_correction"])
    g = sc.grid()
    traj = relax_homogeneous(sc, bi_temperature_datum(g, lam=p.lam))
    rep = relaxation_report(traj, g)
    keys = ["mass", "momentum_1", "momentum_2", "momentum_3", "energy", "entropy", "positivity"]
    write_csv(_out(cfg, "relax.csv"), ["t"] + keys,
              [[t] + [traj.diagnostics[k][i] for k in keys] for i, t in enumerate(traj.times)], man.hash)
    write_json(_out(cfg, "relax.json"), rep, man.hash)
    print(json.dumps({k: rep[k] for k in ("min_entropy_increment", "invariant_drift", "l1_to_lattice_fit")}))
    return 0


def _torus_config(cfg, eps):
    from .kinetic_solver import SolverConfig
    if cfg["solver.spatial"] != "torus_1d":
        raise ConfigError("solver.spatial must be torus_1d for this command")
    if cfg["solver.formulation"] != "perturbation":
        raise ConfigError("solver.formulation must be perturbation on the torus")
    k = cfg["solver.wavenumber"]
    return SolverConfig(epsilon=eps, params=_params(cfg), n_per_axis=cfg["grid.n_per_axis"],
                        v_max=cfg["grid.v_max"], spatial={"n_x": cfg["solver.n_x"], "length": 2 * np.pi / k},
                        dt=cfg["solver.dt"], t_end=cfg["solver.t_end"], integrator=cfg["solver.integrator"],
                        snapshot_stride=cfg["solver.snapshot_stride"])


def cmd_simulate(cfg, man):
    from .kinetic_solver import PerturbationSystem, shear_datum
    from .spectraldiag import KernelBasis
    sc = _torus_config(cfg, cfg["solver.epsilon"])
    system = PerturbationSystem(sc)
    basis = KernelBasis(system.grid, sc.params)
    amp = cfg["solver.amplitude"]
    f0, _ = shear_datum(basis, system.x, cfg["solver.wavenumber"], amp, amp)
    traj = system.run(f0)
    traj.config["manifest_hash"] = man.hash
    traj.save(_out(cfg, "trajectory"))
    print(json.dumps({"snapshots": len(traj.times), "t_end": traj.times[-1]}))
    return 0


def cmd_limit_study(cfg, man):
    from .acceptance import run_limit_study
    p = _params(cfg)
    k = cfg["solver.wavenumber"]
    eps_list = cfg["solver.eps_list"]
    if cfg["solver.spatial"] != "torus_1d":
        raise ConfigError("solver.spatial must be torus_1d for limit-study")
    rep, sweep, coef = run_limit_study(eps_list=tuple(eps_list), n_x=cfg["solver.n_x"], k=k,
                                       t_end=cfg["solver.t_end"], dt=cfg["solver.dt"],
                                       amp=cfg["solver.amplitude"], n_per_axis=cfg["grid.n_per_axis"],
                                       v_max=cfg["grid.v_max"], lam=p.lam, temp=p.temp)
    write_json(_out(cfg, "limit_study.json"), rep, man.hash)
    write_json(_out(cfg, "transport.json"), coef.as_dict(), man.hash)
    rows = []
    for e, s in sweep.series.items():
        m = int(round(k * s.x[1] * len(s.x) / (2 * np.pi)))
        amp_u = np.abs(np.fft.rfft(s.u[:, :, 1], axis=1)[:, m]) * 2 / len(s.x)
        amp_t = np.abs(np.fft.rfft(s.theta_limit, axis=1)[:, m]) * 2 / len(s.x)
        rows += [(e, t, a, b, mn) for t, a, b, mn in zip(s.times, amp_u, amp_t, s.micro_norm)]
    write_csv(_out(cfg, "macro_series.csv"), ["eps", "t", "u2_amplitude", "theta_amplitude", "micro_norm"],
              rows, man.hash)
    print(json.dumps({k_: rep[k_] for k_ in ("eps", "e_u", "e_theta", "pass")}))
    return 0 if rep["pass"] else 1


def cmd_selftest(cfg, man, tier="smoke"):
    from .acceptance import run_all
    results = run_all(tier)
    for r in results:
        print(r.line())
    write_json(_out(cfg, "selftest.json"),
               {"tier": tier, "results": [{"criterion": r.number, "name": r.name, "pass": r.passed,
                                           "seconds": r.seconds, "details": r.details} for r in results]},
               man.hash)
    return 0 if all(r.passed for r in results) else 1


HANDLERS = {"moments": cmd_moments, "constants": cmd_constants, "coercivity": cmd_coercivity,
            "identities": cmd_identities, "transport": cmd_transport, "relax": cmd_relax,
            "simulate": cmd_simulate, "limit-study": cmd_limit_study, "selftest": cmd_selftest}


def build_parser():
    ap = argparse.ArgumentParser(prog="bbelab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI file with [equilibrium], [grid], [solver], [outputs]")
    ap.add_argument("--lambda", dest="lam", help="fugacity parameter lambda")
    ap.add_argument("--temp", help="temperature T")
    ap.add_argument("--eps", help="Knudsen number, or a comma-separated decreasing list")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    ap.add_argument("--tier", choices=("smoke", "full"), default="smoke", help="selftest fidelity")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        over = {"equilibrium.lambda": args.lam, "equilibrium.temp": args.temp,
                "outputs.directory": args.out}
        if args.eps is not None:
            if "," in args.eps:
                over["solver.eps_list"] = args.eps
            else:
                over["solver.epsilon"] = args.eps
        cfg = load_config(args.config, over)
        _set_threads(args.threads)
        man = Manifest(args.command, cfg.as_dict(), {"grid": _grid(cfg).fingerprint()})
        handler = HANDLERS[args.command]
        rc = handler(cfg, man, args.tier) if args.command == "selftest" else handler(cfg, man)
        man.write(cfg["outputs.directory"])
        return rc
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, SolverStagnationError, BbeError) as exc:
        out = over.get("outputs.directory") or "bbelab-out"
        try:
            out = cfg["outputs.directory"]
        except Exception:
            pass
        diag = {"error": type(exc).__name__, "message": str(exc),
                "diagnostic": getattr(exc, "diagnostic", None),
                "spectral_gap": getattr(exc, "spectral_gap", None),
                "residual": getattr(exc, "residual", None), "traceback": traceback.format_exc()}
        path = write_json(os.path.join(out, "failure.json"), diag)
        print(f"numerical failure: {exc} (diagnostic record: {path})", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
