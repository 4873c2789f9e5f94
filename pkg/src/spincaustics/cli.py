"""Command-line surface: run configurations, experiments, output files.

One subcommand, `run`, executes one experiment mode and writes
deterministic text outputs (grids in the caustics-grid v1 format, CSV
time series, line-oriented caustic and Stokes records).  Configuration
comes from a flat key=value file and/or flags; flags win.  Identical
configurations produce byte-identical outputs.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from .boundary import CoherentLabel, label_from_exit_Q
from .errors import ConfigError, SpinCausticsError
from .gridfield import Axis, GridField, emit_grid
from .twolevel import DOWN, UP, HeavyParams, KickParams, SpinState, Window

MODES = ("husimi", "imf", "caustics", "spin-evolution", "oracle-compare",
         "domain-d")
MODELS = ("heavy", "rotor")


@dataclass
class RunConfig:
    """Flat configuration of one experiment run."""

    model: str = "heavy"
    mode: str = "husimi"
    # physical parameters (heavy: hbar F J t; rotor: hbar K deltaK J N)
    hbar: float = 0.25
    F: float = 1.0
    J: float = 0.75
    t: float = 1.5
    K: float = 0.4
    deltaK: float = 1.0
    N: int = 3
    # labels; exit defaults to the model's natural image when nan
    entrance_q: float = 0.0
    entrance_p: float = 0.0
    exit_q: float = float("nan")
    exit_p: float = float("nan")
    spin_in: str = "up"
    spin_out: str = "up"
    # windows and resolutions
    q_min: float = -2.0
    q_max: float = 2.0
    p_min: float = -3.0
    p_max: float = 1.0
    window_halfwidth: float = float("nan")     # Q'-plane, default 3 sqrt(hbar)
    resolution: int = 64
    seed_grid: int = 24
    steps: int = 50
    cutoff: float = 1.151
    eps_amp: float = 1e-6
    out: str = "out"

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.hbar <= 0:
            raise ConfigError("hbar must be positive")
        if self.model == "heavy" and self.t < 0:
            raise ConfigError("t must be non-negative")
        if self.N < 0:
            raise ConfigError("N must be non-negative")
        if self.resolution < 2:
            raise ConfigError("resolution must be at least 2")
        if self.spin_in not in ("up", "down") or self.spin_out not in ("up", "down"):
            raise ConfigError("spins must be 'up' or 'down'")

    def spin(self, which: str) -> SpinState:
        return UP if which == "up" else DOWN

    def heavy_params(self) -> HeavyParams:
        return HeavyParams(hbar=self.hbar, F=self.F, J=self.J, t=self.t)

    def kick_params(self) -> KickParams:
        return KickParams(K=self.K, N=self.N, hbar=self.hbar,
                          deltaK=self.deltaK, J=self.J)

    def entrance(self) -> CoherentLabel:
        return CoherentLabel(self.entrance_q, self.entrance_p)

    def header_meta(self) -> dict[str, str]:
        return {k: repr(v) for k, v in sorted(asdict(self).items())}


def load_config(path: str) -> dict[str, str]:
    """Parse a flat key=value file; '#' starts a comment line."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def build_config(file_values: dict[str, str], flag_values: dict) -> RunConfig:
    cfg = RunConfig()
    valid = {f.name: f.type for f in fields(RunConfig)}
    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    for key, value in merged.items():
        if key not in valid:
            raise ConfigError(f"unknown configuration key {key!r}")
        current = getattr(cfg, key)
        if isinstance(current, bool):
            value = str(value).lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            try:
                value = int(value)
            except ValueError as exc:
                raise ConfigError(f"key {key!r}: {exc}") from None
        elif isinstance(current, float):
            try:
                value = float(value)
            except ValueError as exc:
                raise ConfigError(f"key {key!r}: {exc}") from None
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _fmt(x) -> str:
    if isinstance(x, complex):
        return f"{format(x.real, '.17g')} {format(x.imag, '.17g')}"
    return format(float(x), ".17g")


def _exit_label(cfg: RunConfig) -> CoherentLabel:
    if not (np.isnan(cfg.exit_q) or np.isnan(cfg.exit_p)):
        return CoherentLabel(cfg.exit_q, cfg.exit_p)
    if cfg.model == "heavy":
        return cfg.entrance()
    from .rotor_sc import classical_exit_label
    return classical_exit_label(cfg.entrance(), cfg.kick_params())


def _qprime_window(cfg: RunConfig, anchor: complex) -> Window:
    half = cfg.window_halfwidth
    if np.isnan(half):
        half = 3.0 * np.sqrt(cfg.hbar)
    return Window.centered(anchor, half)


def run(cfg: RunConfig) -> list[str]:
    """Execute one experiment; returns the list of files written."""
    cfg.validate()
    os.makedirs(os.path.dirname(cfg.out) or ".", exist_ok=True)
    handler = {
        "husimi": _run_husimi,
        "imf": _run_imf,
        "caustics": _run_caustics,
        "spin-evolution": _run_spin_evolution,
        "oracle-compare": _run_oracle_compare,
        "domain-d": _run_domain_d,
    }[cfg.mode]
    return handler(cfg)


def _run_husimi(cfg: RunConfig) -> list[str]:
    if cfg.model != "heavy":
        raise ConfigError("husimi mode is defined for the heavy model")
    from .heavy import husimi_grid
    res = husimi_grid(cfg.entrance(), cfg.spin(cfg.spin_in),
                      cfg.spin(cfg.spin_out), cfg.heavy_params(),
                      (cfg.q_min, cfg.q_max), (cfg.p_min, cfg.p_max),
                      cfg.resolution, eps_amp=cfg.eps_amp)
    files = []
    for tag, field in (("exact", res.exact), ("semiclassical", res.semiclassical)):
        field = GridField(field.axes, field.values,
                          {**cfg.header_meta(), "provenance": tag})
        path = f"{cfg.out}.husimi.{tag}.grid"
        emit_grid(field, path)
        files.append(path)
    path = f"{cfg.out}.husimi.branches.txt"
    with open(path, "w") as fh:
        fh.write("# branch counts per exit grid point: i j n_found n_kept\n")
        for k, v in sorted(cfg.header_meta().items()):
            fh.write(f"# meta {k}={v}\n")
        nq, np_ = res.branch_counts.shape
        for i in range(nq):
            for j in range(np_):
                fh.write(f"{i} {j} {res.branch_counts[i, j]} {res.kept_counts[i, j]}\n")
    files.append(path)
    return files


def _run_imf(cfg: RunConfig) -> list[str]:
    if cfg.model != "heavy":
        raise ConfigError("imf mode is defined for the heavy model")
    from .heavy import HeavyMap, imf_landscape
    pmap = HeavyMap(cfg.entrance(), cfg.spin(cfg.spin_in),
                    cfg.spin(cfg.spin_out), cfg.heavy_params())
    window = _qprime_window(cfg, pmap.anchor)
    field, markers = imf_landscape(cfg.entrance(), _exit_label(cfg),
                                   cfg.spin(cfg.spin_in), cfg.spin(cfg.spin_out),
                                   cfg.heavy_params(), window, cfg.resolution)
    field = GridField(field.axes, field.values,
                      {**cfg.header_meta(), "provenance": "semiclassical"})
    path = f"{cfg.out}.imf.grid"
    emit_grid(field, path)
    mpath = f"{cfg.out}.imf.markers.txt"
    with open(mpath, "w") as fh:
        for k, v in sorted(cfg.header_meta().items()):
            fh.write(f"# meta {k}={v}\n")
        for w in markers["z_zero_preimages"]:
            fh.write(f"zero-preimage {_fmt(w)}\n")
        for qp, kind, imf in markers["caustics"]:
            fh.write(f"caustic {kind} {_fmt(qp)} {_fmt(imf)}\n")
    return [path, mpath]


def _make_map(cfg: RunConfig):
    if cfg.model == "heavy":
        from .heavy import HeavyMap
        return HeavyMap(cfg.entrance(), cfg.spin(cfg.spin_in),
                        cfg.spin(cfg.spin_out), cfg.heavy_params())
    from .rotor_sc import RotorMap
    seq = [cfg.spin(cfg.spin_in)] * cfg.N + [cfg.spin(cfg.spin_out)]
    return RotorMap(cfg.entrance(), seq, cfg.kick_params())


def _run_caustics(cfg: RunConfig) -> list[str]:
    from .stokes import StokesAnalysis
    pmap = _make_map(cfg)
    window = _qprime_window(cfg, pmap.anchor)
    analysis = StokesAnalysis.for_map(pmap, window=window)
    path = f"{cfg.out}.caustics.txt"
    with open(path, "w") as fh:
        for k, v in sorted(cfg.header_meta().items()):
            fh.write(f"# meta {k}={v}\n")
        for i, c in enumerate(analysis.caustics):
            src = "-" if c.source_zero is None else _fmt(c.source_zero)
            fh.write(f"caustic {i} {c.kind} {_fmt(c.Qprime)} "
                     f"exit {_fmt(c.exit_image)} zero {src} "
                     f"dist {format(c.zero_distance, '.17g')}\n")
            for ln in analysis.lines.get(i, []):
                pts = " ".join(_fmt(z) for z in ln.points)
                fh.write(f"stokes {i} {ln.termination} {pts}\n")
        for r in analysis.regions:
            pts = " ".join(_fmt(z) for z in r.polygon)
            fh.write(f"region {r.kind} {_fmt(r.caustic.Qprime)} {pts}\n")
    return [path]


def _run_spin_evolution(cfg: RunConfig) -> list[str]:
    if cfg.model != "rotor":
        raise ConfigError("spin-evolution mode is defined for the rotor")
    from .rotor import evolve_observables
    try:
        series = evolve_observables(cfg.entrance(), cfg.spin(cfg.spin_in),
                                    cfg.kick_params(), cfg.steps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    path = f"{cfg.out}.spin.csv"
    with open(path, "w") as fh:
        for k, v in sorted(cfg.header_meta().items()):
            fh.write(f"# meta {k}={v}\n")
        fh.write("n,s_z,c,P\n")
        for n, obs in enumerate(series):
            fh.write(f"{n},{_fmt(obs.s_z)},{_fmt(obs.c)},{_fmt(obs.P)}\n")
    return [path]


def _run_oracle_compare(cfg: RunConfig) -> list[str]:
    exit_label = _exit_label(cfg)
    n = cfg.resolution
    qs = np.linspace(exit_label.q + cfg.q_min, exit_label.q + cfg.q_max, n)
    ps = np.linspace(exit_label.p + cfg.p_min, exit_label.p + cfg.p_max, n)
    exact = np.empty((n, n))
    sc = np.empty((n, n))
    if cfg.model == "heavy":
        from .heavy import HeavyMap, exact_kernel, semiclassical_kernel
        from .stokes import StokesAnalysis
        params = cfg.heavy_params()
        pmap = HeavyMap(cfg.entrance(), cfg.spin(cfg.spin_in),
                        cfg.spin(cfg.spin_out), params)
        stokes = StokesAnalysis.for_map(pmap)
        for i, qx in enumerate(qs):
            for j, px in enumerate(ps):
                lab = CoherentLabel(qx, px)
                exact[i, j] = abs(exact_kernel(cfg.entrance(), lab,
                                               cfg.spin(cfg.spin_in),
                                               cfg.spin(cfg.spin_out), params)) ** 2
                K, _ = semiclassical_kernel(cfg.entrance(), lab,
                                            cfg.spin(cfg.spin_in),
                                            cfg.spin(cfg.spin_out), params,
                                            stokes=stokes, pmap=pmap,
                                            eps_amp=cfg.eps_amp)
                sc[i, j] = abs(K) ** 2
    else:
        from .rotor import exact_decomposed_kernel
        from .rotor_sc import RotorMap, semiclassical_decomposed_kernel
        from .stokes import StokesAnalysis
        params = cfg.kick_params()
        seq = [cfg.spin(cfg.spin_in)] * cfg.N + [cfg.spin(cfg.spin_out)]
        pmap = RotorMap(cfg.entrance(), seq, params)
        stokes = StokesAnalysis.for_map(pmap)
        for i, qx in enumerate(qs):
            for j, px in enumerate(ps):
                lab = CoherentLabel(qx, px)
                exact[i, j] = abs(exact_decomposed_kernel(cfg.entrance(), lab,
                                                          seq, params)) ** 2
                K, _ = semiclassical_decomposed_kernel(cfg.entrance(), lab, seq,
                                                       params, stokes=stokes,
                                                       pmap=pmap,
                                                       eps_amp=cfg.eps_amp)
                sc[i, j] = abs(K) ** 2
    mask = exact >= 0.1 * exact.max()
    rel = np.abs(sc - exact) / np.where(exact > 0, exact, 1.0)
    median = float(np.median(rel[mask])) if mask.any() else float("nan")
    axes = (Axis("q_exit", qs[0], qs[-1], n), Axis("p_exit", ps[0], ps[-1], n))
    files = []
    for tag, vals in (("exact", exact), ("semiclassical", sc)):
        field = GridField(axes, vals, {**cfg.header_meta(), "provenance": tag,
                                       "median_rel_err": format(median, ".17g")})
        path = f"{cfg.out}.compare.{tag}.grid"
        emit_grid(field, path)
        files.append(path)
    return files


def _run_domain_d(cfg: RunConfig) -> list[str]:
    if cfg.model != "rotor":
        raise ConfigError("domain-d mode is defined for the rotor")
    from .rotor_sc import domain_D
    seq = [cfg.spin(cfg.spin_in)] * cfg.N + [cfg.spin(cfg.spin_out)]
    pmap_window = None
    if not np.isnan(cfg.window_halfwidth):
        from .rotor_sc import RotorMap
        pmap = RotorMap(cfg.entrance(), seq, cfg.kick_params())
        pmap_window = Window.centered(pmap.anchor, cfg.window_halfwidth)
    D = domain_D(cfg.entrance(), _exit_label(cfg), seq, cfg.kick_params(),
                 window=pmap_window, resolution=cfg.resolution,
                 cutoff=cfg.cutoff)
    axes = (Axis("Re_Qprime", D.window.re_min, D.window.re_max, cfg.resolution),
            Axis("Im_Qprime", D.window.im_min, D.window.im_max, cfg.resolution))
    vals = np.where(np.isfinite(D.imf), D.imf, 1e300)
    field = GridField(axes, vals, {
        **cfg.header_meta(), "provenance": "semiclassical",
        "area": format(D.area, ".17g"),
        "cutoff_used": format(D.cutoff, ".17g"),
        "exit_q_used": format(D.exit_label.q, ".17g"),
        "exit_p_used": format(D.exit_label.p, ".17g"),
    })
    path = f"{cfg.out}.domain.grid"
    emit_grid(field, path)
    return [path]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spincaustics",
        description="semiclassical phase-space caustics experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="execute one experiment")
    runp.add_argument("--config", help="flat key=value configuration file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        runp.add_argument(flag, dest=f.name, default=None)
    args = parser.parse_args(argv)

    try:
        file_values = load_config(args.config) if args.config else {}
        flag_values = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
        cfg = build_config(file_values, flag_values)
    except (ConfigError, OSError) as exc:
        print(json.dumps({"error": "config", "message": str(exc)}),
              file=sys.stderr)
        return 2
    try:
        files = run(cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}),
              file=sys.stderr)
        return 2
    except SpinCausticsError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 3
    for path in files:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
