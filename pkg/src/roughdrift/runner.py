"""Suite execution for one :class:`ExperimentConfig`; writes reports, tables and figures."""

from __future__ import annotations

import datetime as _dt
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__, besov, mc, plotting, sewing
from .drift import mollify
from .errors import ConfigurationError
from .fbm import FbmConfig, build_volterra, sample_fbm_batch
from .io import write_csv, write_json
from .solve import SolveConfig, euler_solve_batch, solution_from_batch


@dataclass
class RunManifest:
    config_hash: str
    master_seed: int
    code_version: str
    started: str
    finished: str = ""
    outputs: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    @property
    def all_pass(self):
        return bool(self.summary) and all(self.summary.values()) and not self.errors

    def to_dict(self):
        return {
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "code_version": self.code_version,
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
            "summary": self.summary,
            "errors": self.errors,
            "all_pass": self.all_pass,
        }


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _setup(cfg):
    lattice = besov.SpatialLattice(cfg.dim, cfg.lattice.half_width, cfg.lattice.points)
    fcfg = FbmConfig(cfg.hurst, cfg.n_steps, cfg.horizon, cfg.dim)
    ens = mc.Ensemble(fcfg, cfg.master_seed, cfg.n_paths, tuple(cfg.x0) if cfg.x0 else None)
    return lattice, fcfg, ens


def suite_moments(cfg, workers=None):
    lattice, _, ens = _setup(cfg)
    spec = cfg.drift_spec()
    drift = mollify(spec, cfg.epsilon, lattice)
    lags = mc.dyadic_lags(cfg.lags.k_min, cfg.lags.k_max, cfg.horizon)
    target = 1.0 + cfg.hurst * spec.declared_beta
    out, rows, ok = {"anchor": mc.ANCHORS["moments"], "target": target, "tolerance": 0.1, "by_m": []}, [], True
    for m in cfg.m_values:
        table = mc.estimate_moments(ens, "K", m, lags, drift, workers, min_paths=min(1000, cfg.n_paths))
        fit = mc.fit_exponent(table)
        passed = bool(fit.slope >= target - 0.1)
        ok &= passed
        out["by_m"].append({"m": m, "table": table.to_dict(), "fit": fit.to_dict(), "passes": passed})
        rows += [dict(m=m, **r) for r in table.rows()]
    out["passes"] = ok
    return out, rows, [("moments", lambda p: plotting.plot_moment_fit(out["by_m"][0]["table"], out["by_m"][0]["fit"],
                                                                        p, target))]


def suite_regularization(cfg, workers=None):
    lattice, _, ens = _setup(cfg)
    spec = cfg.drift_spec()
    gamma = spec.declared_beta if cfg.gamma is None else cfg.gamma
    f = mollify(spec, cfg.epsilon, lattice)
    lags = mc.dyadic_lags(cfg.lags.k_min, cfg.lags.k_max, cfg.horizon)
    out, rows = {"anchor": mc.ANCHORS["regularization"], "by_m": []}, []
    for m in cfg.m_values:
        rep = mc.regularization_experiment(f, gamma, cfg.hurst, m, ens, lags, workers=workers)
        out["by_m"].append(rep.to_dict())
        rows += [dict(m=m, **r) for r in rep.table.rows()]
    out["passes"] = all(r["passes"] for r in out["by_m"])
    first = out["by_m"][0]
    return out, rows, [("regularization",
                        lambda p: plotting.plot_moment_fit(first["table"], first["fit"], p, first["target"]))]


def suite_sewing(cfg, workers=None):
    lattice, fcfg, ens = _setup(cfg)
    spec = cfg.drift_spec()
    h = mollify(spec, cfg.epsilon, lattice)
    B, _ = sample_fbm_batch(fcfg, cfg.master_seed, range(cfg.n_paths))
    sol = euler_solve_batch(SolveConfig(ens.origin, h), B, fcfg.times)
    kernel = build_volterra(fcfg)
    levels = range(cfg.lags.k_min, cfg.lags.k_max + 1)
    rep = sewing.fit_sewing_conditions(h, sol, kernel, m=cfg.m_values[0], levels=levels, hurst=cfg.hurst,
                                       beta=spec.declared_beta)
    riemann = []
    for row in np.flatnonzero(sol.ok)[:8]:
        base = solution_from_batch(sol, row, cfg.hurst, (cfg.master_seed, int(row)))
        riemann.append(sewing.riemann_convergence(h, base, cfg.horizon, range(2, 9)))
    out = rep.to_dict()
    out["riemann_all_hold"] = all(r["all_hold"] for r in riemann)
    out["riemann_slopes"] = [r["slope"] for r in riemann]
    out["passes"] = bool(rep.passes and rep.bound_violations == 0 and out["riemann_all_hold"])
    return out, rep.level_table, [("sewing", lambda p: plotting.plot_sewing(out, p))]


def suite_tightness(cfg, workers=None):
    lattice, _, ens = _setup(cfg)
    rep = mc.tightness_experiment(cfg.drift_spec(), cfg.schedule.build(), cfg.hurst, ens, lattice,
                                  window_factor=cfg.lags.window_factor, workers=workers)
    out = rep.to_dict()
    return out, rep.rows(), [("tightness", lambda p: plotting.plot_tightness(out, p))]


def suite_stability(cfg, workers=None):
    lattice, _, ens = _setup(cfg)
    rep = mc.stability_experiment(cfg.drift_spec(), cfg.schedule.build(), cfg.schedule_b.build(), cfg.hurst,
                                  ens, lattice, workers=workers)
    out = rep.to_dict()
    return out, rep.rows(), [("stability", lambda p: plotting.plot_stability(out, p))]


def suite_flagship(cfg, workers=None):
    rep = mc.measure_flagship(cfg.dim, cfg.hurst, cfg.n_paths, cfg.master_seed, cfg.drift_spec(), workers=workers)
    out = rep.to_dict()
    rows = [{"gate": k, "passes": v} for k, v in rep.gates().items()]
    figs = [
        ("flagship_moments", lambda p: plotting.plot_moment_fit(out["moments"], out["moment_fit"], p,
                                                                out["target_slope"])),
        ("flagship_tightness", lambda p: plotting.plot_tightness(out["tightness"], p)),
        ("flagship_stability", lambda p: plotting.plot_stability(out["stability"], p)),
    ]
    return out, rows, figs


SUITE_FUNCS = {
    "moments": suite_moments,
    "regularization": suite_regularization,
    "sewing": suite_sewing,
    "tightness": suite_tightness,
    "stability": suite_stability,
    "flagship": suite_flagship,
}


def run(cfg, out_dir, workers=None, figures=True):
    """Execute every selected suite; one JSON, CSV and PNG per suite plus ``manifest.json``.

    Suite failures are recorded and the remaining suites still run; a
    configuration error inside a suite is stored under ``errors``.
    """
    os.makedirs(out_dir, exist_ok=True)
    h = cfg.config_hash()
    man = RunManifest(h, cfg.master_seed, __version__, _now())
    cfg.save(os.path.join(out_dir, "config.yaml"))
    man.outputs["config"] = "config.yaml"
    for name in cfg.suites:
        try:
            report, rows, figs = SUITE_FUNCS[name](cfg, workers)
        except ConfigurationError as exc:
            man.errors[name] = str(exc)
            man.summary[name] = False
            continue
        report["config_hash"] = h
        report["master_seed"] = cfg.master_seed
        files = {"json": f"{name}.json", "csv": f"{name}.csv"}
        write_json(os.path.join(out_dir, files["json"]), report)
        write_csv(os.path.join(out_dir, files["csv"]), rows, h, cfg.master_seed)
        if figures:
            for fig_name, draw in figs:
                draw(os.path.join(out_dir, f"{fig_name}.png"))
                files.setdefault("figures", []).append(f"{fig_name}.png")
        man.outputs[name] = files
        man.summary[name] = bool(report["passes"])
    man.finished = _now()
    write_json(os.path.join(out_dir, "manifest.json"), man.to_dict())
    return man
