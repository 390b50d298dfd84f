"""Command-line interface.

Every subcommand prints one document (JSON by default, CSV on request)
that carries a run manifest. Rerunning with the manifest's parameters
reproduces the output byte for byte; wall-clock time is only included
when ``--timing`` is given, since it would otherwise break that property.

Exit codes: 0 success, 2 invalid arguments, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from importlib import metadata

import numpy as np

from . import designs, dispersion, infodensity
from .dispersion import LOG2E, MonteCarloConfig
from .fading import ChannelParams, FadingModel, PowerConvention, to_transmit
from .linalg import RNG_ID, NumericalFailure, RngStream, haar_moments

SCHEMA_VERSION = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


class UsageError(ValueError):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - running from a source tree
        return "0.0.0"


# -- argument parsing ---------------------------------------------------------


def _snr_db(text: str) -> float:
    try:
        val = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if math.isnan(val) or val == math.inf:
        raise argparse.ArgumentTypeError("SNR must be finite or -inf")
    return val


def _count(text: str) -> int:
    """Integer flag that also accepts whole numbers written like ``1e5``."""
    try:
        val = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not math.isfinite(val) or val != int(val):
        raise argparse.ArgumentTypeError(f"not a whole number: {text!r}")
    return int(val)


def _add_channel(p: argparse.ArgumentParser, mc: bool = True) -> None:
    g = p.add_argument_group("channel")
    g.add_argument("--nt", type=int, default=1, help="transmit antennas")
    g.add_argument("--nr", type=int, default=1, help="receive antennas")
    g.add_argument("--T", dest="T", type=int, default=1, help="coherence time in channel uses")
    pw = g.add_mutually_exclusive_group()
    pw.add_argument("--snr-db", type=_snr_db, default=None, help="10 log10 P; use --snr-db=-inf for P = 0")
    pw.add_argument("--power", type=float, default=None, help="linear power P (default 1)")
    g.add_argument("--power-convention", choices=[c.value for c in PowerConvention], default="transmit")
    g.add_argument("--model", choices=["gaussian", "rademacher"], default="gaussian")
    g.add_argument("--variance", type=float, default=1.0, help="Gaussian fading variance")
    if mc:
        m = p.add_argument_group("monte carlo")
        m.add_argument("--samples", type=_count, default=100_000)
        m.add_argument("--seed", type=int, default=0)
        m.add_argument("--chunk", type=_count, default=10_000)


def _add_output(p: argparse.ArgumentParser, text: bool = False) -> None:
    g = p.add_argument_group("output")
    g.add_argument("--units", choices=["bits", "nats"], default="nats")
    g.add_argument("--format", choices=["json", "csv"] + (["text"] if text else []), default="json")
    g.add_argument("--out", default=None, help="write to this path instead of stdout")
    g.add_argument("--timing", action="store_true", help="add wall-clock time to the manifest")
    g.add_argument("--config", default=None, help="flat key = value file; flags override it")


def _add_vstar(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--vstar",
        default=None,
        help="rank-1 dispersion with this caid score; 'design' uses the full-rate orthogonal design",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimofbl", description="Finite-blocklength MIMO block-fading toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capacity", help="ergodic capacity per channel use")
    _add_channel(p)
    _add_output(p)

    p = sub.add_parser("dispersion", help="capacity, dispersion and its three terms")
    _add_channel(p)
    _add_vstar(p)
    _add_output(p)

    p = sub.add_parser("approx", help="normal-approximation rate versus blocklength")
    _add_channel(p)
    _add_vstar(p)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--n-min", type=_count, default=None, help="smallest blocklength in channel uses (default T)")
    p.add_argument("--n-max", type=_count, default=2000, help="largest blocklength in channel uses")
    p.add_argument("--points", type=int, default=50)
    _add_output(p)

    p = sub.add_parser("blocklength", help="channel uses needed to reach a fraction of capacity")
    _add_channel(p)
    _add_vstar(p)
    p.add_argument("--eta", type=float, default=0.9, help="target fraction of capacity")
    p.add_argument("--eps", type=float, default=1e-3)
    _add_output(p)

    p = sub.add_parser("vstar", help="table of v*(n_t, T) values and bounds")
    p.add_argument("--max", dest="max_dim", type=int, default=8)
    _add_output(p, text=True)

    p = sub.add_parser("design", help="orthogonal or truncated design for n_t x T")
    p.add_argument("--nt", type=int, required=True)
    p.add_argument("--T", dest="T", type=int, required=True)
    _add_output(p, text=True)

    p = sub.add_parser("haar-check", help="Monte Carlo check of Haar moments")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--samples", type=_count, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigmas", type=float, default=4.0, help="pass threshold in standard errors")
    _add_output(p)

    p = sub.add_parser("simulate", help="simulated information density and Berry-Esseen ratio")
    _add_channel(p)
    p.add_argument("--input", choices=["telatar", "design", "zero"], default="telatar")
    p.add_argument("--blocks", type=int, default=4, help="number of input blocks")
    p.add_argument("--input-seed", type=int, default=1)
    _add_output(p)
    return parser


def _fix_negative_values(argv: list[str]) -> list[str]:
    # argparse reads "-inf" as an option; glue it to its flag
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in ("--snr-db", "--snr_db") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"--snr-db={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def read_config(path: str) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    cfg = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            cfg[key.replace("-", "_")] = val.strip("\"'")
    return cfg


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    argv = _fix_negative_values(list(sys.argv[1:] if argv is None else argv))
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, val in cfg.items():
            if key not in known or key in ("help", "config"):
                raise UsageError(f"unknown config key {key!r} for {args.command}")
            act = known[key]
            if isinstance(act, argparse._StoreTrueAction):
                defaults[key] = val.lower() in ("1", "true", "yes", "on")
            elif act.type is not None:
                try:
                    defaults[key] = act.type(val)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"config key {key!r}: {exc}") from exc
            else:
                defaults[key] = val
        if "snr_db" in defaults and "power" in defaults:
            raise UsageError("config sets both snr-db and power")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
        if args.snr_db is not None and args.power is not None:
            # one came from the file, the other from a flag; the flag wins
            flag_power = any(a.startswith("--power") and not a.startswith("--power-") for a in argv)
            if flag_power:
                args.snr_db = None
            else:
                args.power = None
    return args


# -- helpers --------------------------------------------------------------------


def _power(args) -> float:
    if args.power is not None:
        if not args.power >= 0:
            raise UsageError("--power must be non-negative")
        return float(args.power)
    if args.snr_db is None:
        return 1.0
    return 0.0 if args.snr_db == -math.inf else 10.0 ** (args.snr_db / 10.0)


def _channel(args) -> tuple[ChannelParams, FadingModel, MonteCarloConfig]:
    model = FadingModel.rademacher() if args.model == "rademacher" else FadingModel.iid_gaussian(args.variance)
    params = ChannelParams(args.nt, args.nr, args.T, _power(args), args.power_convention)
    model.check(params)
    mc = MonteCarloConfig(args.samples, args.seed, args.chunk)
    return params, model, mc


def _params_echo(args) -> dict:
    skip = {"command", "out", "timing", "config", "format"}
    return {k: _finite_or_str(v) for k, v in sorted(vars(args).items()) if k not in skip}


def _report(args, params, model, mc) -> dispersion.DispersionReport:
    if args.vstar is None:
        return dispersion.v_iid(params, model, mc)
    if args.vstar == "design":
        vstar = designs.full_rate_design(params.n_t, params.coherence_T).score()
    else:
        try:
            vstar = float(args.vstar)
        except ValueError as exc:
            raise UsageError(f"--vstar must be a number or 'design', got {args.vstar!r}") from exc
    return dispersion.v_rank1(params, model, vstar, mc)


def _scale(units: str) -> tuple[float, float]:
    k = LOG2E if units == "bits" else 1.0
    return k, k * k


def _finite(x: float):
    # JSON has no infinity; report divergence as the string "inf"
    return "inf" if x == math.inf else x


def _finite_or_str(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


# -- subcommands ---------------------------------------------------------------


def cmd_capacity(args) -> tuple[dict, list[dict]]:
    params, model, mc = _channel(args)
    est = dispersion.capacity(params, model, mc)
    kc, _ = _scale(args.units)
    res = {"capacity": est.value * kc, "capacity_stderr": est.stderr * kc, "units": args.units}
    return res, [res]


def cmd_dispersion(args) -> tuple[dict, list[dict]]:
    params, model, mc = _channel(args)
    rep = _report(args, params, model, mc).to_units(args.units)
    d = rep.as_dict()
    row = {
        "capacity": rep.capacity,
        "capacity_stderr": rep.capacity_stderr,
        "dispersion": rep.v,
        "dispersion_stderr": rep.v_stderr,
        **{f"term_{k}": v for k, v in rep.terms.items()},
        **{f"term_{k}_stderr": v for k, v in rep.terms_stderr.items()},
        "units": rep.units,
    }
    return d, [row]


def cmd_approx(args) -> tuple[dict, list[dict]]:
    params, model, mc = _channel(args)
    if not 0 < args.eps < 1:
        raise UsageError("--eps must lie in (0, 1)")
    rep = _report(args, params, model, mc)
    T = params.coherence_T
    n_min = T if args.n_min is None else args.n_min
    if n_min < 1 or args.n_max < n_min or args.points < 1:
        raise UsageError("need 1 <= n-min <= n-max and points >= 1")
    grid = np.linspace(n_min, args.n_max, args.points)
    blocks = np.unique(np.maximum(1, np.ceil(grid / T - 1e-12)).astype(int))
    na = dispersion.normal_approx_logM(blocks, args.eps, rep.capacity, rep.v, params)
    kc, _ = _scale(args.units)
    rows = [
        {"channel_uses": int(b * T), "blocks": int(b), "rate": float(r) * kc}
        for b, r in zip(np.atleast_1d(blocks), np.atleast_1d(na.rate))
    ]
    res = {"capacity": rep.capacity * kc, "dispersion": rep.v * kc * kc, "eps": args.eps, "units": args.units, "rows": rows}
    return res, rows


def cmd_blocklength(args) -> tuple[dict, list[dict]]:
    params, model, mc = _channel(args)
    if not 0 < args.eps < 1:
        raise UsageError("--eps must lie in (0, 1)")
    if not 0 < args.eta <= 1:
        raise UsageError("--eta must lie in (0, 1]")
    rep = _report(args, params, model, mc)
    if args.eta == 1:
        n, blocks, rounded = math.inf, math.inf, math.inf
    else:
        bl = dispersion.min_blocklength(args.eta, args.eps, rep.capacity, rep.v, params.coherence_T)
        n, blocks, rounded = bl.channel_uses, bl.blocks, bl.rounded_channel_uses
    res = {
        "channel_uses": _finite(n),
        "blocks": _finite(blocks),
        "rounded_channel_uses": _finite(rounded),
        "eta": args.eta,
        "eps": args.eps,
        "v_over_c2": rep.v_over_c2,
        "vstar": rep.vstar,
    }
    return res, [res]


def cmd_vstar(args) -> tuple[dict, list[dict]]:
    if args.max_dim < 1:
        raise UsageError("--max must be positive")
    table = designs.vstar_table(args.max_dim)
    rows = [
        {"n_t": a, "T": b, "lower": e.lower, "upper": e.upper, "exact": e.exact}
        for (a, b), e in sorted(table.items())
    ]
    text = [" ".join(table[(a, b)].text().rjust(9) for b in range(1, args.max_dim + 1)) for a in range(1, args.max_dim + 1)]
    return {"max": args.max_dim, "entries": rows, "text": "\n".join(text)}, rows


def cmd_design(args) -> tuple[dict, list[dict]]:
    n_t, T = args.nt, args.T
    if n_t < 1 or T < 1:
        raise UsageError("--nt and --T must be positive")
    bound = designs.vstar_upper(n_t, T)
    if bound.exact:
        des, method = designs.full_rate_design(n_t, T), "full-rate"
    else:
        Tp = T
        while designs.rho(Tp) < n_t:
            Tp += 1
        base = designs.full_rate_design(designs.rho(Tp), Tp)
        des, _ = designs.truncation_search(n_t, T, base)
        method = f"truncation of {base.rows}x{base.cols}"
    report = designs.check_caid(designs.design_cov(des, ChannelParams(n_t, 1, T, 1.0)))
    res = {
        **des.as_dict(),
        "method": method,
        "upper_bound": bound.value,
        "caid_rows_ok": report.rows_ok,
        "caid_cols_ok": report.cols_ok,
        "text": des.to_text(),
    }
    rows = [{"row": i + 1, **{f"c{j + 1}": t for j, t in enumerate(r)}} for i, r in enumerate(des.tokens())]
    return res, rows


def cmd_haar_check(args) -> tuple[dict, list[dict]]:
    if args.n < 2 or args.samples < 2:
        raise UsageError("need --n >= 2 and --samples >= 2")
    moments = haar_moments(args.n, args.samples, RngStream(args.seed))
    rows = [
        {
            "moment": m.name,
            "estimate": m.estimate,
            "stderr": m.stderr,
            "expected": m.expected,
            "z": m.z(),
            "pass": bool(abs(m.z()) <= args.sigmas),
        }
        for m in moments
    ]
    return {"n": args.n, "sigmas": args.sigmas, "all_pass": all(r["pass"] for r in rows), "moments": rows}, rows


def cmd_simulate(args) -> tuple[dict, list[dict]]:
    params, model, mc = _channel(args)
    tparams = to_transmit(params, model)
    gen = RngStream(args.input_seed).generator()
    if args.blocks < 1:
        raise UsageError("--blocks must be positive")
    if args.input == "telatar":
        xs = list(infodensity.telatar_input(tparams)(gen, args.blocks))
    elif args.input == "design":
        des = designs.full_rate_design(tparams.n_t, tparams.coherence_T)
        xs = list(des.sample(gen, tparams.power, size=args.blocks))
    else:
        xs = [np.zeros((tparams.n_t, tparams.coherence_T))] * args.blocks
    mom = dispersion.eta_moments(tparams, model, mc)
    kc, kv = _scale(args.units)
    rows, third, var = [], 0.0, 0.0
    for j, x in enumerate(xs):
        est = infodensity.empirical_conditional_moments(x, model, tparams, MonteCarloConfig(args.samples, args.seed + 1 + j, args.chunk))
        third += est.abs_third_central
        var += est.variance * tparams.coherence_T
        rows.append(
            {
                "block": j + 1,
                "frob_sq": float(np.sum(x * x)),
                "mean": est.mean * kc,
                "mean_stderr": est.stderr["mean"] * kc,
                "analytic_mean": float(dispersion.conditional_mean(x, tparams, mom)) * kc,
                "variance": est.variance * kv,
                "variance_stderr": est.stderr["variance"] * kv,
                "analytic_variance": float(dispersion.v1_of_x(x, tparams, mom)) * kv,
                "abs_third_central": est.abs_third_central * kc**3,
            }
        )
    if not var > 0:
        raise NumericalFailure("total conditional variance is zero")
    b_n = math.sqrt(len(xs)) * third / var**1.5  # scale-free, same in bits and nats
    return {"input": args.input, "berry_esseen_ratio": b_n, "units": args.units, "blocks": rows}, rows


COMMANDS = {
    "capacity": cmd_capacity,
    "dispersion": cmd_dispersion,
    "approx": cmd_approx,
    "blocklength": cmd_blocklength,
    "vstar": cmd_vstar,
    "design": cmd_design,
    "haar-check": cmd_haar_check,
    "simulate": cmd_simulate,
}


# -- output ---------------------------------------------------------------------


def manifest(args, elapsed: float | None = None) -> dict:
    m = {
        "tool": "mimofbl",
        "version": _version(),
        "schema": SCHEMA_VERSION,
        "subcommand": args.command,
        "params": _params_echo(args),
        "seed": getattr(args, "seed", None),
        "samples": getattr(args, "samples", None),
        "rng": RNG_ID,
        "units": getattr(args, "units", None),
    }
    if elapsed is not None:
        m["wall_clock_s"] = elapsed
    return m


def render(args, result: dict, rows: list[dict], man: dict) -> str:
    if args.format == "json":
        return json.dumps({"manifest": man, "result": result}, indent=2, sort_keys=True) + "\n"
    if args.format == "text":
        return result["text"] + "\n"
    buf = io.StringIO()
    for key, val in man.items():
        buf.write(f"# {key}={json.dumps(val, sort_keys=True)}\n")
    fields = list(rows[0]) if rows else []
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows({k: _finite(v) if isinstance(v, float) else v for k, v in r.items()} for r in rows)
    return buf.getvalue()


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, OSError) as exc:
        print(f"mimofbl: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    start = time.perf_counter()
    try:
        result, rows = COMMANDS[args.command](args)
    except NumericalFailure as exc:
        print(f"mimofbl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"mimofbl: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    elapsed = time.perf_counter() - start if args.timing else None
    text = render(args, result, rows, manifest(args, elapsed))
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"mimofbl: error: {exc}", file=sys.stderr)
            return EXIT_INVALID
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
