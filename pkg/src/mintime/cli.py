"""Command line entry point: ``mintime {solve,char,extremal,symplectic-scan,analyze,run}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import traceback
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import analysis, eikonal, extremals, geometry, hamiltonian
from .fields import hormander_rank
from .grid import TargetSet
from .scenario import NEEDS_SOLVE, ConfigError, Scenario, load_scenario

log = logging.getLogger("mintime")

# stage whose output each assertion reads
CHECK_STAGE = {
    "converged": "solve", "char_empty": "char", "char_in_slab": "char",
    "crosscheck_gap_h": "crosscheck", "petrov_positive": "petrov",
    "petrov_decreasing": "petrov", "refinement_fraction": "refinement",
    "flagged_in_slab": "refinement", "extremal_status": "extremal",
    "hormander_full_rank": "hormander",
}

SUBCOMMAND_STAGES = {
    "solve": ["solve", "crosscheck"],
    "char": ["solve", "char", "petrov"],
    "extremal": ["extremal"],
    "symplectic-scan": ["hormander", "symplectic"],
    "analyze": ["solve", "lipschitz", "refinement", "holder"],
}


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        return float(o) if np.isfinite(o) else str(float(o))
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


@dataclass
class RunReport:
    scenario: dict
    order: list = field(default_factory=list)
    stages: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    timestamps: dict = field(default_factory=dict)  # everything nondeterministic lives here

    @property
    def passed(self) -> bool:
        stages_ok = all(s["status"] == "ok" for s in self.stages.values())
        return stages_ok and all(a["passed"] for a in self.assertions if not a.get("skipped"))

    def to_json(self) -> dict:
        return {"scenario": self.scenario, "order": self.order, "stages": self.stages,
                "assertions": self.assertions, "passed": self.passed,
                "timestamps": self.timestamps}


class Runner:
    def __init__(self, sc: Scenario, out: Path):
        self.sc = sc
        self.out = out
        self.tol = sc.resolved()
        self.vf = None
        self.results: dict = {}
        self.opts = eikonal.SolverOptions(
            tol_converge=self.tol["tol_converge"], max_sweeps=int(self.tol["max_sweeps"]),
            c_min=self.tol["c_min"], n_controls=int(self.tol["n_controls"]),
            dt_max_cells=self.tol["dt_max_cells"])

    # -- stages -----------------------------------------------------------
    def stage_hormander(self):
        sc = self.sc
        pts = sc.hormander.get("points")
        if pts is None:
            rng = np.random.default_rng(sc.seed)
            pts = (sc.grid.lo + rng.random((int(sc.hormander.get("samples", 10)), sc.grid.n))
                   * (sc.grid.hi - sc.grid.lo)).tolist()
        reps = [hormander_rank(sc.system, np.asarray(p, float),
                               max_depth=int(self.tol["hormander_depth"])).to_json() for p in pts]
        _dump(self.out / "hormander.json", reps)
        self.results["hormander"] = reps
        return ["hormander.json"], {"points": len(reps),
                                    "steps": [r["step"] for r in reps]}

    def stage_symplectic(self):
        sc = self.sc
        cfg = sc.symplectic
        rng = np.random.default_rng(sc.seed)
        reports = []
        pts = cfg.get("points")
        if pts is None:
            fix = {int(k): float(v) for k, v in cfg.get("fix", {}).items()}
            pts = []
            for _ in range(int(cfg.get("samples", 20))):
                x = sc.grid.lo + rng.random(sc.grid.n) * (sc.grid.hi - sc.grid.lo)
                for k, v in fix.items():
                    x[k] = v
                pts.append(x.tolist())
        for x in pts:
            x = np.asarray(x, float)
            A = sc.system.frame(x)
            _, s, vt = np.linalg.svd(A)
            ker = vt[int(np.sum(s > 1e-12 * max(1.0, s[0]))):]
            if ker.shape[0] == 0:
                reports.append({"x": x.tolist(), "verdict": "empty_fiber"})
                continue
            p = ker.T @ rng.standard_normal(ker.shape[0])
            reports.append(hamiltonian.symplectic_test(sc.system, (x, p),
                                                       tol=self.tol["tol_gram"]).to_json())
        _dump(self.out / "symplectic.json", reports)
        verdicts = sorted({r["verdict"] for r in reports})
        return ["symplectic.json"], {"samples": len(reports), "verdicts": verdicts}

    def stage_solve(self):
        vf = eikonal.solve_min_time(self.sc.system, self.sc.target, self.sc.grid, self.opts)
        self.vf = vf
        vf.save(self.out / "value", self.sc.target.to_json(), self.opts.to_json())
        return ["value.csv", "value.json"], {"converged": vf.converged, "iterations": vf.iterations,
                                             "residual": vf.residual, "horizon": vf.horizon}

    def stage_crosscheck(self):
        sl = eikonal.solve_semilagrangian(self.sc.system, self.sc.target, self.sc.grid, self.opts)
        sl.save(self.out / "value_sl", self.sc.target.to_json(), self.opts.to_json())
        sel = (self.vf.values <= 1.0) & (sl.values <= 1.0) & ~self.vf.target
        gap = float(np.max(np.abs(self.vf.values - sl.values)[sel])) if sel.any() else 0.0
        self.results["crosscheck_gap_h"] = gap / self.sc.grid.h
        return ["value_sl.csv", "value_sl.json"], {"sup_gap": gap, "gap_over_h": gap / self.sc.grid.h,
                                                   "sl_converged": sl.converged}

    def stage_char(self):
        outs, per_tau = [], {}
        self.results["char"] = {}
        for tau in self.sc.taus:
            recs = geometry.detect_characteristic_points(
                self.sc.system, self.vf, tau, self.tol["eps_char"], self.tol["band_width"],
                self.tol["r_L"])
            name = f"char_tau{tau:g}.json"
            mask = geometry.reachable_mask(self.vf, tau)
            _dump(self.out / name, {"tau": tau, "records": [r.to_json() for r in recs],
                                    "reachable_mask": geometry.encode_mask(mask)})
            outs.append(name)
            per_tau[str(tau)] = len(recs)
            self.results["char"][tau] = recs
        return outs, {"records": per_tau}

    def _region(self, d):
        if d.get("kind", "all") == "all":
            return None
        if d["kind"] == "slab":
            return geometry.slab_region(int(d["axis"]), float(d["halfwidth"]),
                                        bool(d.get("complement", False)))
        raise ValueError(f"unknown region kind {d['kind']!r}")

    def stage_petrov(self):
        regions = self.sc.petrov_regions or [{"kind": "all"}]
        reps = []
        for tau in self.sc.taus:
            for reg in regions:
                try:
                    r = geometry.petrov_margin(self.sc.system, self.vf, tau, self._region(reg),
                                               self.tol["band_width"], self.tol["r_L"])
                    reps.append(r.to_json())
                except ValueError as exc:
                    reps.append({"tau": tau, "region": reg, "error": str(exc)})
        _dump(self.out / "petrov.json", reps)
        self.results["petrov"] = reps
        return ["petrov.json"], {"mu": [r.get("mu") for r in reps]}

    def stage_extremal(self):
        outs, summ = [], []
        self.results["extremal"] = []
        for k, job in enumerate(self.sc.extremals):
            kind = job.get("kind")
            dur = float(job.get("duration", 1.0))
            if kind == "normal":
                e = extremals.integrate_normal_extremal(self.sc.system, job["x0"], job["p0"], dur,
                                                        self.tol["dt"], self.tol["eps_H"])
            elif kind == "singular":
                e = extremals.integrate_singular_extremal(self.sc.system, (job["x0"], job["p0"]),
                                                          dur, self.tol["dt"], self.tol["eps_H"])
            elif kind == "shoot":
                so = extremals.ShootingOptions(restarts=int(self.tol["restarts"]),
                                               seed=self.sc.seed, gap_tol=self.tol["gap_tol"])
                r = extremals.shoot_cc_distance(self.sc.system, job["start"], job["goal"], so)
                name = f"shoot_{k}.json"
                _dump(self.out / name, r.to_json())
                outs.append(name)
                info = {"kind": kind, "time": r.time, "gap": r.endpoint_gap, "success": r.success}
                summ.append(info)
                self.results["extremal"].append(info)
                continue
            else:
                raise ValueError(f"unknown extremal kind {kind!r}")
            name = f"extremal_{k}.csv"
            e.to_csv(self.out / name)
            outs += [name, f"extremal_{k}.json"]
            info = {"kind": kind, "status": e.status, "reason": e.reason,
                    "max_H_drift": e.max_H_drift, "end": e.y[-1].tolist()}
            summ.append(info)
            self.results["extremal"].append(info)
        return outs, {"jobs": summ}

    def stage_lipschitz(self):
        lf = analysis.lipschitz_field(self.vf, self.tol["r_cells"] * self.sc.grid.h)
        lf.to_csv(self.out / "lipschitz.csv")
        vals = lf.values[np.isfinite(lf.values)]
        return ["lipschitz.csv"], {"max_L": float(vals.max()), "median_L": float(np.median(vals))}

    def stage_refinement(self):
        from .grid import UniformGrid
        cfg = self.sc.refinement
        base = UniformGrid.from_box(self.sc.grid.lo, self.sc.grid.hi, int(cfg.get("base_cells", 25)))
        rep = analysis.refinement_study(self.sc.system, self.sc.target, base,
                                        self.tol["r_cells"], self.tol["gamma"], self.opts)
        _dump(self.out / "refinement.json", rep.to_json())
        self.results["refinement"] = rep
        return ["refinement.json"], {"fraction": rep.fraction, "step_fractions": rep.step_fractions,
                                     "n_flagged": int(rep.flagged.sum()), "h_coarse": base.h}

    def stage_holder(self):
        cfg = self.sc.holder
        center = cfg["center"]
        tgt = TargetSet.ball(center, float(cfg.get("target_radius", 0.0)))
        # the semi-Lagrangian scheme keeps point sources sharp; LF smears them over several cells
        solver = (eikonal.solve_semilagrangian if cfg.get("scheme", "semilagrangian") == "semilagrangian"
                  else eikonal.solve_min_time)
        vf = solver(self.sc.system, tgt, self.sc.grid, self.opts)
        fit = analysis.holder_fit(vf, center, cfg["directions"], cc_radii=cfg.get("cc_radii", []))
        _dump(self.out / "holder.json", fit.to_json())
        return ["holder.json"], {"alphas": fit.alphas, "C1": fit.c1, "C2": fit.c2}

    # -- assertions -------------------------------------------------------
    def _petrov(self, a: dict) -> list[dict]:
        reps = self.results["petrov"]
        if "tau" in a:
            reps = [r for r in reps if abs(r["tau"] - float(a["tau"])) < 1e-12]
        return reps

    def check(self, a: dict) -> dict:
        c = a["check"]
        h = self.sc.grid.h
        try:
            if c == "converged":
                ok, detail = bool(self.vf.converged), {"iterations": self.vf.iterations}
            elif c == "char_empty":
                counts = {str(t): len(r) for t, r in self.results["char"].items()}
                ok, detail = all(v == 0 for v in counts.values()), counts
            elif c == "char_in_slab":
                ax, k = int(a.get("axis", 0)), float(a.get("halfwidth_h", 3))
                worst = max((abs(r.x[ax]) for rs in self.results["char"].values() for r in rs),
                            default=0.0)
                ok, detail = worst <= k * h + 1e-12, {"max_abs": worst, "bound": k * h}
            elif c == "crosscheck_gap_h":
                g = self.results["crosscheck_gap_h"]
                ok, detail = g <= float(a.get("max", 3)), {"gap_over_h": g}
            elif c == "petrov_positive":
                mus = [r["mu"] for r in self._petrov(a) if "mu" in r]
                ok, detail = bool(mus) and min(mus) > 0, {"mu": mus}
            elif c == "petrov_decreasing":
                mus = [r.get("mu") for r in self._petrov(a)]
                ok = None not in mus and all(x > y for x, y in zip(mus, mus[1:]))
                detail = {"mu": mus}
            elif c == "refinement_fraction":
                rep = self.results["refinement"]
                ok, detail = rep.fraction <= float(a["max"]), {"fraction": rep.fraction}
            elif c == "flagged_in_slab":
                rep = self.results["refinement"]
                ax, k = int(a.get("axis", 0)), float(a.get("halfwidth_h", 3))
                hc = rep.grids[0].h
                worst = float(np.abs(rep.flagged_points[:, ax]).max()) if len(rep.flagged_points) else 0.0
                ok, detail = worst <= k * hc + 1e-12, {"max_abs": worst, "bound": k * hc}
            elif c == "extremal_status":
                job = self.results["extremal"][int(a["job"])]
                want = a.get("contains", a.get("status", "completed"))
                got = f"{job.get('status', '')} {job.get('reason', '')}"
                ok, detail = want in got, {"got": got.strip(), "want": want}
            elif c == "hormander_full_rank":
                ranks = [r["rank"] for r in self.results["hormander"]]
                ok, detail = all(r == self.sc.system.n for r in ranks), {"ranks": ranks}
            else:
                raise ValueError(c)
        except (KeyError, AttributeError, IndexError, TypeError) as exc:
            ok, detail = False, {"error": f"stage output missing: {exc!r}"}
        return {"check": c, "spec": a, "passed": bool(ok), "detail": detail}


def run_scenario(sc: Scenario, out_root: str | Path, stages: list[str] | None = None) -> RunReport:
    out = Path(out_root) / sc.dirname
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "config.json", sc.raw)
    chosen = sc.stages if stages is None else [s for s in sc.stages if s in stages] or stages
    runner = Runner(sc, out)
    report = RunReport(sc.echo(), list(chosen))
    report.timestamps["started"] = datetime.now(timezone.utc).isoformat()
    report.timestamps["stage_seconds"] = {}
    solve_failed = False
    for st in chosen:
        t0 = time.perf_counter()
        if solve_failed and st in NEEDS_SOLVE:
            report.stages[st] = {"status": "skipped", "outputs": [], "summary": {},
                                 "error": "solve stage failed"}
            continue
        try:
            outputs, summary = getattr(runner, f"stage_{st}")()
            report.stages[st] = {"status": "ok", "outputs": outputs, "summary": _jsonable(summary)}
        except Exception as exc:  # recorded, run continues with independent stages
            log.error("stage %s failed: %s", st, exc)
            report.stages[st] = {"status": "failed", "outputs": [], "summary": {},
                                 "error": f"{type(exc).__name__}: {exc}"}
            log.debug(traceback.format_exc())
            solve_failed = solve_failed or st == "solve"
        report.timestamps["stage_seconds"][st] = round(time.perf_counter() - t0, 3)
    for a in sc.assertions:
        if stages is not None and CHECK_STAGE[a["check"]] not in chosen:
            # a subcommand ran only part of the pipeline
            report.assertions.append({"check": a["check"], "spec": a, "passed": False,
                                      "skipped": True, "detail": {"stage not run": CHECK_STAGE[a["check"]]}})
            continue
        report.assertions.append(runner.check(a))
    report.timestamps["finished"] = datetime.now(timezone.utc).isoformat()
    _dump(out / "report.json", report.to_json())
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mintime", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "char", "extremal", "symplectic-scan", "analyze", "run"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="scenario JSON file")
        sp.add_argument("--out", default="runs", help="output root directory")
        sp.add_argument("--threads", type=int, default=1, help="numba worker threads")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        import numba
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # threading-layer probes
            numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    except (ImportError, ValueError):
        pass
    try:
        sc = load_scenario(args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    stages = None if args.command == "run" else SUBCOMMAND_STAGES[args.command]
    if stages is not None:
        stages = [s for s in stages if s in sc.stages] or [s for s in stages if s != "crosscheck"]
    report = run_scenario(sc, args.out, stages)
    out = Path(args.out) / sc.dirname
    for name, st in report.stages.items():
        print(f"{name:12s} {st['status']}")
    for a in report.assertions:
        print(f"{'SKIP' if a.get('skipped') else 'PASS' if a['passed'] else 'FAIL'} {a['check']} {json.dumps(_jsonable(a['detail']))}")
    print(f"report: {out / 'report.json'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
