"""Experiment orchestration from flat config files.

Subcommands map onto the library: hypotheses, descend, simulate, invariant,
profile, mixing, cutoff, reproduce-all.  Every artifact directory is named
<subcommand>-<UTC stamp>-<config hash>; file contents never embed wall-clock
state, so a rerun with the same config and seed is byte-identical.

Exit codes: 0 success, 2 config error, 3 numeric error, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import acceptance, analysis, density, flow, potential as potential_mod, sde
from .analysis import (
    TvProfile,
    cutoff_verdict,
    mixing_time,
    profile_fp,
    profile_mc,
    suggest_grid,
)
from .density import (
    limit_invariant_density,
    rescaled_invariant_density,
    sample_density,
    tv_density,
    export_density_csv,
)
from .errors import ConfigError, InvalidParameterError, LangmixError
from .flow import descend_from_infinity, entrance_integral
from .potential import (
    Potential,
    localize,
    make_ginzburg_landau,
    make_power_potential,
    scaling,
)
from .sde import SdeConfig, make_drift, simulate, simulate_from_infinity


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; serialize/parse round-trips exactly."""

    potential: str = "power:2"
    eps_list: tuple = (1e-1, 1e-2, 1e-3)
    x0: float = 1.0
    t_grid: str = "geom:0.05:20:40"
    n_paths: int = 100000
    seed: int = acceptance.DEFAULT_SEED
    channels: tuple = ("fp",)
    output_dir: str = "out"

    def times(self) -> np.ndarray:
        return parse_t_grid(self.t_grid)

    def build_potential(self) -> Potential:
        return build_potential(self.potential)


def build_potential(spec: str) -> Potential:
    """Resolve a potential name: power:<alpha>, ginzburg-landau, localized:<base>:<M>."""
    spec = spec.strip()
    if spec == "ginzburg-landau":
        return make_ginzburg_landau()
    if spec.startswith("power:"):
        try:
            return make_power_potential(float(spec.split(":", 1)[1]))
        except ValueError as exc:
            raise ConfigError(f"bad power potential spec {spec!r}: {exc}") from exc
    if spec.startswith("localized:"):
        base_spec, _, m_txt = spec[len("localized:"):].rpartition(":")
        if not base_spec:
            raise ConfigError(f"localized spec needs a base and a cut: {spec!r}")
        try:
            return localize(build_potential(base_spec), float(m_txt))
        except ValueError as exc:
            raise ConfigError(f"bad localized spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown potential {spec!r}")


def parse_t_grid(spec: str) -> np.ndarray:
    spec = spec.strip()
    try:
        if spec.startswith("geom:") or spec.startswith("lin:"):
            kind, a, b, n = spec.split(":")
            a, b, n = float(a), float(b), int(n)
            if not (0 < a < b and n >= 2):
                raise ValueError("need 0 < start < stop and n >= 2")
            return np.geomspace(a, b, n) if kind == "geom" else np.linspace(a, b, n)
        vals = np.array([float(v) for v in spec.split(",")])
        if vals.size == 0 or np.any(np.diff(vals) <= 0) or vals[0] <= 0:
            raise ValueError("explicit grid must be positive and increasing")
        return vals
    except ValueError as exc:
        raise ConfigError(f"bad t_grid spec {spec!r}: {exc}") from exc


def _parse_x0(text: str) -> float:
    text = text.strip().lower()
    if text in ("inf", "+inf", "infinity"):
        return math.inf
    if text == "-inf":
        return -math.inf
    return float(text)


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key-value format; raises ConfigError with field names."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    if "experiment" not in cp:
        raise ConfigError("config needs an [experiment] section")
    sec = cp["experiment"]
    known = {"potential", "eps_list", "x0", "t_grid", "n_paths", "seed", "channels", "output_dir"}
    unknown = set(sec) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = ExperimentConfig()
    try:
        eps_list = tuple(
            float(v) for v in sec.get("eps_list", "1e-1,1e-2,1e-3").split(",")
        )
        channels = tuple(
            c.strip() for c in sec.get("channels", "fp").split(",") if c.strip()
        )
        cfg = ExperimentConfig(
            potential=sec.get("potential", base.potential).strip(),
            eps_list=eps_list,
            x0=_parse_x0(sec.get("x0", "1.0")),
            t_grid=sec.get("t_grid", base.t_grid).strip(),
            n_paths=int(sec.get("n_paths", str(base.n_paths))),
            seed=int(sec.get("seed", str(base.seed))),
            channels=channels,
            output_dir=sec.get("output_dir", base.output_dir).strip(),
        )
    except ValueError as exc:
        raise ConfigError(f"config field error: {exc}") from exc
    # validate against module preconditions now, not at run time
    for e in cfg.eps_list:
        if not 0.0 < e <= 1.0:
            raise ConfigError(f"eps_list entry {e!r} outside (0, 1]")
    if any(b >= a for a, b in zip(cfg.eps_list, cfg.eps_list[1:])):
        raise ConfigError("eps_list must be strictly decreasing")
    if cfg.n_paths < 1:
        raise ConfigError("n_paths must be >= 1")
    if not set(cfg.channels) <= {"fp", "mc"}:
        raise ConfigError(f"channels must be a subset of fp,mc, got {cfg.channels}")
    cfg.build_potential()
    cfg.times()
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    x0 = "inf" if cfg.x0 == math.inf else ("-inf" if cfg.x0 == -math.inf else repr(cfg.x0))
    lines = [
        "[experiment]",
        f"potential = {cfg.potential}",
        "eps_list = " + ",".join(repr(e) for e in cfg.eps_list),
        f"x0 = {x0}",
        f"t_grid = {cfg.t_grid}",
        f"n_paths = {cfg.n_paths}",
        f"seed = {cfg.seed}",
        "channels = " + ",".join(cfg.channels),
        f"output_dir = {cfg.output_dir}",
    ]
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _run_dir(cfg: ExperimentConfig, out_override, subcommand: str) -> str:
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    root = out_override or cfg.output_dir
    path = os.path.join(root, f"{subcommand}-{stamp}-{config_hash(cfg)}")
    os.makedirs(path, exist_ok=True)
    return path


def _write_table(path, cfg: ExperimentConfig, lines) -> None:
    with open(path, "w") as fh:
        fh.write(f"# config_hash={config_hash(cfg)}\n# seed={cfg.seed}\n")
        fh.write("\n".join(lines) + "\n")


def _limit_field_of(p: Potential) -> sde.DriftField:
    return make_drift(p, "limit")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_hypotheses(cfg, out):
    p = cfg.build_potential()
    rep = potential_mod.check_hypotheses(p)
    lines = ["check,value"]
    lines.append(f"h1_ok,{rep.h1_ok}")
    lines.append(f"h2_ok,{rep.h2_ok}")
    lines.append(f"h3_ok,{rep.h3_ok}")
    for lam, err in rep.h2_sup_errors:
        lines.append(f"h2_sup_error[{lam!r}],{err!r}")
    lines.append(f"h3_witness,{rep.h3_witness!r}")
    for note in rep.notes:
        lines.append(f'note,"{note}"')
    _write_table(os.path.join(out, "hypotheses.csv"), cfg, lines)
    ok = rep.h1_ok and rep.h2_ok and rep.h3_ok
    print(f"hypotheses: h1={rep.h1_ok} h2={rep.h2_ok} h3={rep.h3_ok}")
    return 0 if ok else 3


def _cmd_descend(cfg, out):
    p = cfg.build_potential()
    dr = _limit_field_of(p)
    lines = ["t,psi_infinity"]
    for t in cfg.times():
        psi = sde._descent_state(dr, float(t))
        lines.append(f"{t!r},{psi!r}")
    _write_table(os.path.join(out, "descend.csv"), cfg, lines)
    print(f"descend: {len(cfg.times())} rows -> {out}/descend.csv")
    return 0


def _cmd_simulate(cfg, out):
    p = cfg.build_potential()
    times = cfg.times()
    t_end = float(times[-1])
    dt = 1e-3
    record = tuple(float(t) for t in times if t <= t_end)
    for eps in cfg.eps_list:
        dr = make_drift(p, "rescaled", eps)
        scfg = SdeConfig(
            drift=dr, noise_scale=1.0, t_end=t_end, dt=dt,
            n_paths=cfg.n_paths, seed=cfg.seed, x0=cfg.x0 if math.isfinite(cfg.x0) else math.inf,
            record_times=record,
        )
        ens = (
            simulate(scfg)
            if math.isfinite(cfg.x0)
            else simulate_from_infinity(replace(scfg, x0=cfg.x0))
        )
        base = os.path.join(out, f"ensemble-eps{eps:g}")
        sde.export_ensemble_csv(
            ens, base + ".csv", meta={"config_hash": config_hash(cfg), "seed": cfg.seed}
        )
        sde.export_ensemble_binary(ens, base + ".bin")
        print(f"simulate: eps={eps:g} -> {base}.csv/.bin")
    return 0


def _grid_for(cfg, p: Potential):
    extent = 0.0
    if math.isfinite(cfg.x0):
        extent = max(
            abs(cfg.x0) / scaling(e, p.alpha).b_eps for e in cfg.eps_list
        )
    return suggest_grid(p.alpha, p.c0_local, x_extent=extent)


def _cmd_invariant(cfg, out):
    p = cfg.build_potential()
    grid = _grid_for(cfg, p)
    lim = limit_invariant_density(p.alpha, p.c0_local, grid)
    export_density_csv(
        lim, os.path.join(out, "invariant-limit.csv"),
        meta={"config_hash": config_hash(cfg), "seed": cfg.seed},
    )
    lines = ["eps,norm_constant,tv_to_limit"]
    for eps in cfg.eps_list:
        d = rescaled_invariant_density(p, eps, grid)
        export_density_csv(
            d, os.path.join(out, f"invariant-eps{eps:g}.csv"),
            meta={"config_hash": config_hash(cfg), "seed": cfg.seed},
        )
        lines.append(f"{eps!r},{d.norm_constant!r},{tv_density(d, lim)!r}")
    _write_table(os.path.join(out, "invariant-convergence.csv"), cfg, lines)
    print(f"invariant: {len(cfg.eps_list)} densities -> {out}")
    return 0


def _profiles_for(cfg, jobs: int):
    """Rescaled-time fp (and optionally mc) profiles per eps plus the limit."""
    p = cfg.build_potential()
    times = cfg.times()
    grid = _grid_for(cfg, p)
    inv_limit = limit_invariant_density(p.alpha, p.c0_local, grid)
    x0_limit = math.copysign(math.inf, cfg.x0) if cfg.x0 != 0 else 0.0
    out = {"limit": {}}

    def fp_job(eps):
        if eps == "limit":
            return profile_fp(
                make_drift(p, "limit"), x0_limit, inv_limit, times,
                context={"eps": "limit", "potential": p.label},
            )
        dr = make_drift(p, "rescaled", eps)
        inv = rescaled_invariant_density(p, eps, grid)
        x_eps = cfg.x0 / scaling(eps, p.alpha).b_eps if math.isfinite(cfg.x0) else cfg.x0
        return profile_fp(
            dr, x_eps, inv, times, context={"eps": eps, "potential": p.label}
        )

    keys = ["limit"] + list(cfg.eps_list)
    if "fp" in cfg.channels:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            for key, prof in zip(keys, pool.map(fp_job, keys)):
                out.setdefault(key if key == "limit" else key, {})["fp"] = prof
    if "mc" in cfg.channels:
        inv_samples = sample_density(inv_limit, max(cfg.n_paths, 10 ** 5), cfg.seed, tag=1)
        for eps in cfg.eps_list:
            dr = make_drift(p, "rescaled", eps)
            x_eps = cfg.x0 / scaling(eps, p.alpha).b_eps if math.isfinite(cfg.x0) else cfg.x0
            t_end = float(times[-1])
            scfg = SdeConfig(
                drift=dr, noise_scale=1.0, t_end=t_end, dt=1e-3,
                n_paths=cfg.n_paths, seed=cfg.seed, x0=x_eps,
                record_times=tuple(float(t) for t in times),
            )
            ens = simulate(scfg) if math.isfinite(x_eps) else simulate_from_infinity(scfg)
            inv_eps = rescaled_invariant_density(p, eps, grid)
            samples = sample_density(inv_eps, max(cfg.n_paths, 10 ** 5), cfg.seed, tag=2)
            out.setdefault(eps, {})["mc"] = profile_mc(ens, samples, times)
    return out, p


def _cmd_profile(cfg, out, jobs):
    profs, p = _profiles_for(cfg, jobs)
    for key, chans in profs.items():
        for chan, prof in chans.items():
            lines = ["t,value"] + [
                f"{t!r},{v!r}" for t, v in zip(prof.times, prof.values)
            ]
            name = f"profile-{chan}-{'limit' if key == 'limit' else f'eps{key:g}'}.csv"
            _write_table(os.path.join(out, name), cfg, lines)
    print(f"profile: wrote {sum(len(c) for c in profs.values())} profiles -> {out}")
    return 0


def _cmd_mixing(cfg, out, jobs):
    profs, p = _profiles_for(cfg, jobs)
    limit_prof = profs["limit"]["fp"]
    lines = ["eps,eta,tau_rescaled,tau_absolute,h_eta"]
    for eta in (0.25, 0.5, 0.75):
        for eps in cfg.eps_list:
            prof = profs[eps].get("fp") or profs[eps]["mc"]
            a_eps = scaling(eps, p.alpha).a_eps
            rep = mixing_time(prof, eta, a_eps=1.0, limit_profile=limit_prof)
            lines.append(
                f"{eps!r},{eta},{rep.tau!r},{rep.tau * a_eps!r},{rep.h_eta!r}"
            )
    _write_table(os.path.join(out, "mixing.csv"), cfg, lines)
    print(f"mixing: -> {out}/mixing.csv")
    return 0


def _cmd_cutoff(cfg, out, jobs):
    profs, p = _profiles_for(cfg, jobs)
    limit_prof = profs["limit"]["fp"]
    h_half = mixing_time(limit_prof, 0.5).tau
    windowed = {}
    scales = {}
    for eps in cfg.eps_list:
        prof = profs[eps].get("fp") or profs[eps]["mc"]
        windowed[eps] = TvProfile(
            times=prof.times / h_half, values=prof.values,
            channel=prof.channel, context=dict(prof.context),
        )
        scales[eps] = scaling(eps, p.alpha).a_eps * h_half
    rep = cutoff_verdict(windowed, scales, (0.5, 2.0))
    lines = [f"verdict,{rep.verdict}", f"margin,{rep.margin}"]
    for e in rep.eps_list:
        for d in rep.delta_grid:
            lines.append(f"value[eps={e!r}][delta={d!r}],{rep.values[e][d]!r}")
        lines.append(f"mixing_ratio[eps={e!r}],{rep.mixing_ratios[e]!r}")
    _write_table(os.path.join(out, "cutoff.csv"), cfg, lines)
    print(f"cutoff: verdict={rep.verdict} -> {out}/cutoff.csv")
    return 0


def _cmd_reproduce_all(cfg, out, scale: str):
    ctx = acceptance.AcceptanceContext(seed=cfg.seed, scale=scale)
    results = acceptance.run_all(ctx, out)
    lines = ["criterion,name,passed,runtime_s,budget_s"]
    for res in results:
        print(res.line())
        lines.append(
            f"{res.cid},{res.name},{res.passed},{res.runtime_s:.2f},{res.budget_s:g}"
        )
        for name, rows in res.tables.items():
            _write_table(os.path.join(out, f"c{res.cid:02d}-{name}"), cfg, rows)
    _write_table(os.path.join(out, "summary.csv"), cfg, lines)
    ok = all(r.passed for r in results)
    print(f"reproduce-all [{scale}]: {'ALL PASS' if ok else 'FAILURES PRESENT'} -> {out}")
    return 0 if ok else 4


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="langmix",
        description="Degenerate Langevin dynamics: mixing profiles, invariant "
        "measures, and cut-off diagnostics.",
    )
    ap.add_argument("subcommand", choices=[
        "hypotheses", "descend", "simulate", "invariant",
        "profile", "mixing", "cutoff", "reproduce-all",
    ])
    ap.add_argument("--config", help="path to the experiment config file")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--out", help="override the config output directory")
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                    help="worker pool size for independent jobs")
    ap.add_argument("--channel", choices=["fp", "mc", "both"],
                    help="override the config channels")
    ap.add_argument("--scale", choices=["full", "smoke"], default="full",
                    help="reproduce-all size (smoke exercises the code paths quickly)")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.config:
            with open(args.config) as fh:
                cfg = parse_config(fh.read())
        else:
            cfg = ExperimentConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.channel:
            chans = ("fp", "mc") if args.channel == "both" else (args.channel,)
            cfg = replace(cfg, channels=chans)
        out = _run_dir(cfg, args.out, args.subcommand)
        with open(os.path.join(out, "config.ini"), "w") as fh:
            fh.write(serialize_config(cfg))
        if args.subcommand == "hypotheses":
            return _cmd_hypotheses(cfg, out)
        if args.subcommand == "descend":
            return _cmd_descend(cfg, out)
        if args.subcommand == "simulate":
            return _cmd_simulate(cfg, out)
        if args.subcommand == "invariant":
            return _cmd_invariant(cfg, out)
        if args.subcommand == "profile":
            return _cmd_profile(cfg, out, args.jobs)
        if args.subcommand == "mixing":
            return _cmd_mixing(cfg, out, args.jobs)
        if args.subcommand == "cutoff":
            return _cmd_cutoff(cfg, out, args.jobs)
        if args.subcommand == "reproduce-all":
            return _cmd_reproduce_all(cfg, out, args.scale)
        raise ConfigError(f"unhandled subcommand {args.subcommand!r}")
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LangmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
