"""
Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 identification did
not converge, 3 coupled simulation aborted.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import beam as bm
from . import config as cfgmod
from . import ssmodel as ss
from .coupling import CouplingConfig, HydroParams, RomForceField, run_full_scale
from .exceptions import (ConfigError, CouplingError, DegenerateReferenceError, DimensionError,
                         DivergenceError, ParameterError, VivromError)
from .signals import TimeSeries, best_fit, read_csv, welch_psd, write_csv
from .synth import MotionSpec, make_dataset
from .sysid.identify import (InlineForcing, compare_forcings, identify_crossflow, identify_inline,
                             initial_guess, inline_input, scale_gain,
                             select_inline_order)
from .wake import VdpParams

EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_COUPLING = 0, 1, 2, 3
U64 = 2**64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--seed", type=_seed, default=argparse.SUPPRESS, help="RNG seed (u64)")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")

    p = _Parser(prog="vivrom", description="Reduced-order VIV models: synthesis, "
                "identification and riser simulation.", parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")

    q = sub.add_parser("identify", parents=[common], help="identify force models from a dataset")
    q.add_argument("dataset", type=Path)
    q.add_argument("--variant", choices=["all", "displacement", "velocity", "acceleration",
                                         "lc2", "lc_lcdot"])

    q = sub.add_parser("simulate", parents=[common], help="coupled full-scale riser run")
    q.add_argument("--snapshot-every", type=float, default=1.0,
                   help="seconds between node snapshots (0 disables)")

    q = sub.add_parser("spectrum", parents=[common], help="Welch spectrum of one channel")
    q.add_argument("csv", type=Path)
    q.add_argument("--channel", required=True)
    q.add_argument("--asd", action="store_true", help="amplitude spectral density")
    q.add_argument("--segment", type=int, default=None)
    q.add_argument("--overlap", type=float, default=0.5)

    q = sub.add_parser("bestfit", parents=[common], help="best-fit percentage of two channels")
    q.add_argument("measured", type=Path)
    q.add_argument("simulated", type=Path)
    q.add_argument("--channel", required=True)
    q.add_argument("--sim-channel", default=None)

    q = sub.add_parser("hankel-order", parents=[common], help="model order from Hankel singular values")
    q.add_argument("csv", type=Path)
    q.add_argument("--input", default="L_c")
    q.add_argument("--output", default="D_c_fluct")
    q.add_argument("--input-fn", choices=["none", "lc2", "lc_lcdot"], default="lc2")
    q.add_argument("--markov", type=int, default=None, help="number of Markov parameters")
    q.add_argument("--rel-threshold", type=float, default=1e-6)
    q.add_argument("--method", choices=["arx", "fir"], default="arx")
    return p


def _out_dir(args) -> Path:
    d = getattr(args, "out", None) or Path(".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _config(args, *required) -> dict:
    path = getattr(args, "config", None)
    cfg = cfgmod.load(path) if path is not None else {}
    cfgmod.require(cfg, *required)
    return cfg


def _vdp(section: dict) -> VdpParams:
    return VdpParams(section["mu"], section["amp"], section["omega0_sq"], section.get("gain", 0.0))


def _load_model(path, base: Path | None) -> ss.StateSpaceModel:
    p = Path(path)
    if not p.is_absolute() and base is not None and not p.exists():
        p = base / p
    try:
        return ss.StateSpaceModel.load(p)
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot load model {str(p)!r}: {exc}", "/ssmodel") from None


def _series_channels(path: Path, *names) -> dict:
    data = read_csv(path)
    missing = [n for n in names if n not in data]
    if missing:
        raise DimensionError(f"{path} has no channel {missing[0]!r} (found {sorted(data)})")
    return data


def _json_dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_synth(args) -> int:
    cfg = _config(args, "vdp")
    sy = cfg.get("synth", {})
    vdp_sec = cfg["vdp"]
    drag = _load_model(cfg["ssmodel"], args.config.parent) if "ssmodel" in cfg else None
    motion = MotionSpec(**sy.get("motion", {}))
    seed = getattr(args, "seed", 0)
    out = _out_dir(args)
    data = make_dataset(_vdp(vdp_sec), vdp_sec.get("forcing_kind", "acceleration"), drag,
                        sy.get("inline_forcing", "lc2"), motion, sy.get("dt", 1e-3), sy.get("T", 2.0),
                        sy.get("spinup", 2.0), sy.get("noise", 0.0), seed,
                        tuple(vdp_sec.get("ic", (0.01, 0.0))))
    write_csv(out / "dataset.csv", data)
    return EXIT_OK


def cmd_identify(args) -> int:
    cfg = _config(args)
    idc = cfg.get("identify", {})
    variant = args.variant or idc.get("variant", "all")
    data = _series_channels(args.dataset, "L_c", *(["D_c_fluct"] if variant in ("all", "lc2", "lc_lcdot") else []),
                            *(["d_CF"] if variant not in ("lc2", "lc_lcdot") else []))
    rel = idc.get("rel_threshold", 1e-6)
    holdout = idc.get("holdout", 0.0)
    p0_sec = idc.get("p0", cfg.get("vdp"))
    out = _out_dir(args)
    reports, models = [], {}
    if variant == "all":
        p0 = _vdp(p0_sec) if p0_sec else None
        kind0 = (p0_sec or {}).get("forcing_kind", "acceleration")
        res = compare_forcings(data, p0, kind0, rel)
        reports = res.inline + res.crossflow
        models = res.models
        (out / "ranking.md").write_text(res.table() + "\n")
    elif variant in ("lc2", "lc_lcdot"):
        m, rep = identify_inline(data["L_c"], data["D_c_fluct"], variant, rel, holdout=holdout)
        reports, models = [rep], {variant: m}
    else:
        if p0_sec:
            p0 = scale_gain(_vdp(p0_sec), data["d_CF"], p0_sec.get("forcing_kind", "acceleration"), variant)
        else:
            p0 = initial_guess(data["d_CF"], data["L_c"], variant)
        params, rep = identify_crossflow(data["d_CF"], data["L_c"], variant, p0, holdout=holdout)
        reports, models = [rep], {variant: params}
    for rep in reports:
        _json_dump(out / f"report_{rep.variant}.json", _clean(rep.to_dict()))
    for name, m in models.items():
        if isinstance(m, ss.StateSpaceModel):
            m.save(out / f"model_{name}.json")
        else:
            _json_dump(out / f"model_{name}.json", {**m.to_dict(), "forcing_kind": name})
    return EXIT_OK if all(r.converged for r in reports) else EXIT_NOCONV


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def build_run(cfg: dict, base: Path | None):
    """Beam model, force field, coupling controls and duration from a validated config."""
    b = dict(cfg.get("beam", {}))
    if "I" not in b and "J" in b:
        b["I"] = b["J"]
    model = bm.BeamModel.riser(**b)
    hy = cfg.get("hydro", {})
    hydro = HydroParams(U=hy.get("U", 1.4), D=hy.get("D", model.D or 0.027),
                        rho_f=hy.get("rho_f", 1000.0), St=hy.get("St", 0.2))
    co = cfg.get("coupling", {})
    cc = CouplingConfig(tol=co.get("tol", 1e-6), omega0=co.get("omega0", 0.7),
                        max_subiter=co.get("max_subiter", 50), dt=co.get("dt", 1e-3))
    drag = _load_model(cfg["ssmodel"], base) if "ssmodel" in cfg else None
    v = cfg["vdp"]
    rom = RomForceField(model, _vdp(v), v.get("forcing_kind", "acceleration"), drag, hydro,
                        co.get("dcm", 2.34), cc.dt, ic=tuple(v.get("ic", (0.01, 0.0))))
    return model, rom, cc, co.get("T", 25.0)


def cmd_simulate(args) -> int:
    cfg = _config(args, "vdp")
    model, rom, cc, T = build_run(cfg, args.config.parent)
    out = _out_dir(args)
    snaps = out / "snapshots"
    every = int(round(args.snapshot_every / cc.dt)) if args.snapshot_every > 0 else 0
    if every:
        snaps.mkdir(exist_ok=True)

    def snapshot(i, state):
        bm.write_snapshot(snaps / f"snapshot_{i:07d}.csv", model, state)

    try:
        res = run_full_scale(model, rom, cc, T, snapshot if every else None, every)
    except (CouplingError, DivergenceError) as exc:
        diag = {"error": type(exc).__name__, "message": str(exc), "time": getattr(exc, "time", None),
                "node": getattr(exc, "node", None),
                "residual_history": list(getattr(exc, "residual_history", []))}
        _json_dump(out / "diagnostics.json", _clean(diag))
        print(f"vivrom simulate: {exc}", file=sys.stderr)
        return EXIT_COUPLING
    res.write_midpoint(out / "midpoint_trajectory.csv")
    il, cf = res.midpoint(bm.IL), res.midpoint(bm.CF)
    n = len(il)
    tail = slice(n // 3, None) if n >= 48 else slice(None)
    il_t = TimeSeries(0.0, il.dt, il.values[tail] - il.values[tail].mean())
    cf_t = TimeSeries(0.0, cf.dt, cf.values[tail])
    if len(il_t) >= 8:
        s_il, s_cf = welch_psd(il_t), welch_psd(cf_t)
        table = np.column_stack([s_il.frequencies, s_il.amplitudes, s_cf.amplitudes])
        np.savetxt(out / "midpoint_spectrum.csv", table, delimiter=",",
                   header="frequency,d_IL,d_CF", comments="", fmt="%.10g")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    data = _series_channels(args.csv, args.channel)
    s = data[args.channel]
    sp = welch_psd(s, args.segment, args.overlap)
    if args.asd:
        sp = sp.to_asd()
    out = _out_dir(args)
    table = np.column_stack([sp.frequencies, sp.amplitudes])
    np.savetxt(out / f"spectrum_{args.channel}.csv", table, delimiter=",",
               header="frequency,amplitude", comments="", fmt="%.10g")
    return EXIT_OK


def cmd_bestfit(args) -> int:
    a = _series_channels(args.measured, args.channel)[args.channel]
    name = args.sim_channel or args.channel
    b = _series_channels(args.simulated, name)[name]
    value = best_fit(a, b)
    print(f"{value:.6f}")
    if getattr(args, "out", None) is not None:
        _json_dump(_out_dir(args) / "bestfit.json", {"channel": args.channel, "best_fit_percent": value})
    return EXIT_OK


def cmd_hankel_order(args) -> int:
    data = _series_channels(args.csv, args.input, args.output)
    u, y = data[args.input], data[args.output]
    if args.input_fn != "none":
        u = inline_input(u, InlineForcing.parse(args.input_fn))
    K = args.markov if args.markov is not None else min(200, len(u) // 10 - 1)
    if args.method == "arx":
        order, h, sv = select_inline_order(u, y, args.rel_threshold, K)
    else:
        h = ss.markov_from_data(u, y, K)
        r = ss.default_hankel_size(K)
        order, sv = ss.select_order(ss.build_hankel(h, r, r), args.rel_threshold)
    print(order)
    if getattr(args, "out", None) is not None:
        out = _out_dir(args)
        np.savetxt(out / "hankel_singular_values.csv", np.column_stack([np.arange(1, sv.size + 1), sv]),
                   delimiter=",", header="index,singular_value", comments="", fmt=["%d", "%.10g"])
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "identify": cmd_identify, "simulate": cmd_simulate,
            "spectrum": cmd_spectrum, "bestfit": cmd_bestfit, "hankel-order": cmd_hankel_order}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command in ("synth", "simulate") and getattr(args, "config", None) is None:
        print(f"vivrom {args.command}: --config is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DimensionError, DegenerateReferenceError, ParameterError, OSError,
            ValueError) as exc:
        print(f"vivrom {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VivromError, ArithmeticError) as exc:
        print(f"vivrom {args.command}: {exc}", file=sys.stderr)
        return EXIT_NOCONV if args.command == "identify" else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
