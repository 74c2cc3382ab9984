"""Command-line interface.

Exit status: 0 on success, 1 on input errors, 2 on numerical failures.
Every flag can also be set through an environment variable named
``LPANOVA_<FLAG>`` (upper case, dashes as underscores, e.g. ``LPANOVA_H``,
``LPANOVA_GRID_COUNT``), or in a ``--config`` file of ``key = value`` lines.
Precedence: command-line flag, then environment, then config file.
"""

from __future__ import annotations

import argparse
import io
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import InputError, LpAnovaError, NumericalError
from .global_anova import (
    SST_CONVENTIONS, global_anova, hstar, integrate_anova, quadratic_form_check,
)
from .inference import VARIANTS, anova_table, f_test
from .io import load_csv, provenance, provenance_lines, to_json, write_rows
from .kernels import KERNELS
from .local_anova import local_anova_curve
from .lpfit import FitConfig, GridSpec, sweep
from .simulate import FAMILIES, Generator, power_study, rsq_study
from .vcm import vcm_global, vcm_sweep

ENV_PREFIX = "LPANOVA_"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _positive_float():
    def conv(s):
        try:
            v = float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {s!r}") from None
        if not (math.isfinite(v) and v > 0):
            raise argparse.ArgumentTypeError(f"must be > 0 (got {s})")
        return v
    return conv


def _float():
    def conv(s):
        try:
            v = float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {s!r}") from None
        if not math.isfinite(v):
            raise argparse.ArgumentTypeError(f"must be finite (got {s})")
        return v
    return conv


def _int(lo):
    def conv(s):
        try:
            v = int(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo} (got {s})")
        return v
    return conv


def _float_list():
    def conv(s):
        try:
            return [float(t) for t in s.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None
    return conv


def _bool(s):
    return str(s).strip().lower() in ("1", "true", "yes", "on")


def _add_fit_flags(p, need_input=True):
    if need_input:
        p.add_argument("--input", required=True, help="CSV file (x,y) or (u,x2..xd,y) for vcm")
        p.add_argument("--no-header", action="store_true",
                       help="treat the first row as data (default: auto-detect)")
    p.add_argument("--kernel", choices=sorted(KERNELS), default="epanechnikov")
    p.add_argument("--h", type=_positive_float(), required=True, help="bandwidth")
    p.add_argument("--p", type=_int(0), default=1, help="local polynomial degree")
    p.add_argument("--grid-count", type=_int(2), default=200)
    p.add_argument("--grid-start", type=_float())
    p.add_argument("--grid-stop", type=_float())
    p.add_argument("--grid-step", type=_positive_float())
    p.add_argument("--padded", action="store_true",
                   help="extend the grid by the kernel support radius on both sides")
    p.add_argument("--singular", choices=("flag", "pinv"), default="flag",
                   help="rank-deficient windows: skip them (flag) or use minimum-norm fits")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.add_argument("--config", help="flat key = value file of flag defaults")
    p.add_argument("--output", help="output path (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpanova", description="ANOVA inference for local polynomial regression")
    parser.add_argument("--version", action="version", version=f"lpanova {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="local polynomial fit on the grid (CSV: x0, beta..., fhat)")
    _add_fit_flags(p)

    p = sub.add_parser("local-anova", help="pointwise SST/SSE/SSR and R^2 on the grid")
    _add_fit_flags(p)

    for name, text in (("anova", "global ANOVA table"), ("ftest", "F test for no effect")):
        p = sub.add_parser(name, help=text)
        _add_fit_flags(p)
        p.add_argument("--sst", choices=SST_CONVENTIONS, default="sample",
                       help="denominator of the reported R^2")
        p.add_argument("--variant", choices=VARIANTS, default="conservative")

    p = sub.add_parser("vcm", help="varying coefficient model fit and global ANOVA")
    _add_fit_flags(p)
    p.add_argument("--hstar", action="store_true", help="assemble H_u* and report its trace")
    p.add_argument("--coefficients", help="write a_hat on the grid to this CSV path")

    p = sub.add_parser("hstar", help="assemble H* and export it with diagnostics")
    _add_fit_flags(p)
    p.add_argument("--matrix", help="write the matrix here (.npz for binary, otherwise CSV)")
    p.add_argument("--max-n", type=_int(2), default=5000)

    p = sub.add_parser("simulate", help="Monte Carlo R^2 study or F-test power study")
    _add_fit_flags(p, need_input=False)
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--sigma", type=_float(), help="noise scale (bump, twisted_pear)")
    p.add_argument("--a", type=_float(), help="effect size (bump_scaled, pear_scaled)")
    p.add_argument("--n", type=_int(2), default=50)
    p.add_argument("--reps", type=_int(1), default=400)
    p.add_argument("--seed", type=_int(0), default=0)
    p.add_argument("--workers", type=_int(1), default=1)
    p.add_argument("--power", action="store_true",
                   help="rejection-rate sweep over --a-values, --n-values, --h-values")
    p.add_argument("--a-values", type=_float_list())
    p.add_argument("--n-values", type=_float_list())
    p.add_argument("--h-values", type=_float_list())
    p.add_argument("--level", type=_positive_float(), default=0.05)
    p.add_argument("--replicates", help="write per-replicate values to this CSV path")
    # sparse tails of the normal designs need minimum-norm fits to keep replicates
    p.set_defaults(singular="pinv")
    return parser


def _subparser(parser, argv):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            cmd = next((a for a in argv if a in action.choices), None)
            return action.choices.get(cmd) if cmd else None
    return None


def _set_defaults(sub, values: dict, label):
    """Install ``{dest: raw string}`` as validated defaults of ``sub``."""
    actions = {a.dest: a for a in sub._actions if a.option_strings and a.dest not in ("help", "config")}
    for dest, raw in values.items():
        action = actions.get(dest)
        if action is None:
            raise InputError(f"{label(dest)}: unknown setting for '{sub.prog}'")
        if isinstance(action, argparse._StoreTrueAction):
            value = _bool(raw)
        else:
            try:
                value = action.type(raw) if action.type else raw
            except argparse.ArgumentTypeError as e:
                raise InputError(f"{label(dest)}: {e}") from None
            if action.choices is not None and value not in action.choices:
                raise InputError(f"{label(dest)}: must be one of {sorted(action.choices)} (got {raw!r})")
        action.default = value
        action.required = False


def read_config(path) -> dict:
    """Flat ``key = value`` file; keys are flag names without dashes
    (``grid-count`` or ``grid_count``).  ``#`` starts a comment."""
    out = {}
    try:
        fh = open(path)
    except OSError as e:
        raise InputError(f"cannot read config file {path}: {e.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise InputError(f"{path}: line {lineno}: expected 'key = value'")
            out[key.strip().lstrip("-").replace("-", "_").lower()] = value.strip()
    return out


def _config_path(argv):
    for i, a in enumerate(argv):
        if a == "--config":
            if i + 1 >= len(argv):
                raise InputError("argument --config: expected a path")
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def _apply_env(parser, argv, environ):
    """Defaults for the chosen subcommand from ``--config`` and then
    ``LPANOVA_*`` variables; explicit flags still win."""
    sub = _subparser(parser, argv)
    if sub is None:
        return
    path = _config_path(argv)
    if path is not None:
        _set_defaults(sub, read_config(path), lambda d: f"{path}: {d}")
    known = {a.dest for a in sub._actions}
    env = {k[len(ENV_PREFIX):].lower(): v for k, v in environ.items() if k.startswith(ENV_PREFIX)}
    env = {k: v for k, v in env.items() if k in known}
    _set_defaults(sub, env, lambda d: ENV_PREFIX + d.upper())


def _config(args) -> FitConfig:
    explicit = (args.grid_start, args.grid_stop, args.grid_step)
    if any(v is not None for v in explicit):
        grid = GridSpec(start=args.grid_start, stop=args.grid_stop, step=args.grid_step,
                        padded=args.padded)
    else:
        grid = GridSpec(count=args.grid_count, padded=args.padded)
    return FitConfig(h=args.h, p=args.p, kernel=args.kernel, grid=grid)


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "config")}


def _emit(args, text):
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(columns, rows, prov):
    buf = io.StringIO()
    write_rows(buf, columns, rows, provenance_lines(prov))
    return buf.getvalue()


def _load(args, vcm=False):
    return load_csv(args.input, header=False if args.no_header else "auto", vcm=vcm)


def cmd_fit(args, prov):
    data, cfg = _load(args), _config(args)
    c = sweep(data, cfg, singular=args.singular)
    cols = ["x0"] + [f"beta{j}" for j in range(cfg.p + 1)] + ["fhat", "status"]
    rows = []
    for g, x0 in enumerate(c.grid):
        ok = bool(c.ok[g])
        rows.append([x0] + [b if ok else "" for b in c.beta[g]] + [c.fhat[g], "ok" if ok else "infeasible"])
    if args.format == "json":
        out = {"provenance": prov, "grid": c.grid, "beta": np.where(c.ok[:, None], c.beta, np.nan),
               "fhat": c.fhat, "ok": c.ok, "failures": {g: str(e) for g, e in c.failures.items()}}
        return to_json(out) + "\n"
    return _csv_text(cols, rows, prov)


def cmd_local_anova(args, prov):
    data, cfg = _load(args), _config(args)
    loc = local_anova_curve(data, cfg, singular=args.singular)
    if args.format == "json":
        return to_json({"provenance": prov, "grid": loc.grid, "r2": loc.r2, "sst": loc.sst,
                        "sse": loc.sse, "ssr": loc.ssr, "usable": loc.usable}) + "\n"
    buf = io.StringIO()
    loc.to_csv(buf, provenance_lines(prov))
    return buf.getvalue()


def _global(args):
    data, cfg = _load(args), _config(args)
    g = global_anova(data, cfg, args.sst, with_trace=True, singular=args.singular)
    return data, cfg, g


def cmd_anova(args, prov):
    data, cfg, g = _global(args)
    table = anova_table(g, g.trace, args.variant, h=cfg.h, kernel=cfg.kernel.name, p=cfg.p)
    extra = {"trace": g.trace, "r2": g.r2, "r2_adjusted": g.r2_adjusted,
             "r2_integrated": g.r2_integrated, "r2_sample": g.r2_sample,
             "sst_convention": g.sst_convention, "skipped_points": g.skipped_points}
    if args.format == "json":
        return to_json({"provenance": prov, "table": table.as_dicts(), **extra,
                        "test": table.test.to_dict()}) + "\n"
    if args.format == "csv":
        return "\n".join(f"# {ln}" for ln in provenance_lines(prov)) + "\n" + table.to_csv()
    lines = [f"# {ln}" for ln in provenance_lines(prov)]
    lines.append(f"n = {g.n}   tr(H*) = {g.trace:.4f}   kernel = {cfg.kernel.name}   "
                 f"h = {cfg.h:g}   p = {cfg.p}   F variant = {args.variant}")
    body = table.to_text()
    tail = (f"R^2 ({g.sst_convention} SST) = {g.r2:.4f}   adjusted = {g.r2_adjusted:.4f}   "
            f"skipped grid points = {g.skipped_points}\n")
    return "\n".join(lines) + "\n" + body + tail


def cmd_ftest(args, prov):
    _, _, g = _global(args)
    t = f_test(g, g.trace, args.variant)
    if args.format == "text":
        return (f"F = {t.f_stat:.4f} on ({t.df_model:.4f}, {t.df_resid:.4f}) df, "
                f"p-value = {t.p_value:.4g} ({t.variant})\n")
    return to_json({"provenance": prov, **t.to_dict(), "trace": g.trace}) + "\n"


def cmd_vcm(args, prov):
    data, cfg = _load(args, vcm=True), _config(args)
    g = vcm_global(data, cfg, with_hstar=args.hstar, singular=args.singular)
    if args.coefficients:
        c = vcm_sweep(data, cfg, singular=args.singular)
        cols = ["u0"] + [f"a{k + 1}" for k in range(data.d)] + ["ghat", "status"]
        rows = [[u0] + [a if c.ok[i] else "" for a in c.beta[i, :, 0]]
                + [c.fhat[i], "ok" if c.ok[i] else "infeasible"] for i, u0 in enumerate(c.grid)]
        with open(args.coefficients, "w", newline="") as fh:
            write_rows(fh, cols, rows, provenance_lines(prov))
    out = {"n": g.n, "d": g.d, "sst_integrated": g.sst_integrated, "sst_sample": g.sst_sample,
           "sse": g.sse, "ssr": g.ssr, "r2": g.r2, "skipped_points": g.skipped_points,
           "trace_info_only": g.trace}
    if g.hstar is not None:
        out["quadratic_form_sse"] = float(data.y @ data.y - data.y @ (g.hstar.matrix @ data.y)) / g.n
    if args.format == "text":
        return "".join(f"{k}: {v}\n" for k, v in out.items())
    return to_json({"provenance": prov, **out}) + "\n"


def cmd_hstar(args, prov):
    data, cfg = _load(args), _config(args)
    policy = "pinv" if args.singular == "pinv" else "raise"
    hs = hstar(data, cfg, on_infeasible=policy, max_n=args.max_n)
    interior = hs.interior_mask()
    rs = hs.row_sums()
    diag = {
        "n": hs.n, "trace": hs.trace, "df_model": hs.df_model(), "df_resid": hs.df_resid(),
        "symmetry_max_abs": float(np.max(np.abs(hs.matrix - hs.matrix.T))),
        "interior_rows": int(interior.sum()),
        "interior_row_sum_max_dev": float(np.max(np.abs(rs[interior] - 1))) if interior.any() else None,
        "row_sum_max_dev": float(np.max(np.abs(rs - 1))),
        "skipped_points": hs.skipped_points,
    }
    try:
        g = integrate_anova(local_anova_curve(data, cfg, singular=args.singular))
        q = quadratic_form_check(hs, data.y, g)
        diag.update(sse_gap=q.sse_gap, ssr_gap=q.ssr_gap, sse_rel=q.sse_rel, ssr_rel=q.ssr_rel)
    except NumericalError:
        pass
    if args.matrix:
        if args.matrix.endswith(".npz"):
            hs.to_npz(args.matrix, kernel=cfg.kernel.name)
        else:
            hs.to_csv(args.matrix, provenance_lines(prov) + [f"kernel={cfg.kernel.name}"])
    if args.format == "text":
        return "".join(f"{k}: {v}\n" for k, v in diag.items())
    return to_json({"provenance": prov, **diag}) + "\n"


def cmd_simulate(args, prov):
    cfg = _config(args)
    param_name = "sigma" if args.family in ("bump", "twisted_pear") else "a"
    if args.power:
        if args.family not in ("bump_scaled", "pear_scaled"):
            raise InputError("--power needs --family bump_scaled or pear_scaled")
        a_values = args.a_values or [args.a if args.a is not None else 0.0]
        n_values = [int(v) for v in (args.n_values or [args.n])]
        h_values = args.h_values or [args.h]
        rows = power_study(args.family, a_values, n_values, h_values, args.reps, args.seed,
                           args.level, cfg.kernel, cfg.p, cfg.grid.count, args.workers,
                           args.singular)
        cols = ["a", "n", "h", "reject_rate", "mc_se", "reps", "failures"]
        table = [[r.a, r.n, r.h, r.reject_rate, r.mc_se, r.reps, r.failures] for r in rows]
        if args.format == "json":
            return to_json({"provenance": prov, "rows": [dict(zip(cols, t)) for t in table]}) + "\n"
        return _csv_text(cols, table, prov)
    value = getattr(args, param_name)
    if value is None:
        raise InputError(f"--{param_name} is required for family {args.family}")
    gen = Generator(args.family, value, args.n)
    res = rsq_study(gen, cfg, args.reps, args.seed, args.workers, args.singular)
    if args.replicates:
        with open(args.replicates, "w", newline="") as fh:
            write_rows(fh, ["replicate"] + list(res.values), list(res.rows()), provenance_lines(prov))
    out = {"provenance": prov, "reps": res.reps, "failed_replicates": len(res.failures),
           "failures": res.failures, "summary": res.summary}
    if args.format == "text":
        lines = [f"{k:14s} mean {v['mean']:.4f}  sd {v['sd']:.4f}  negative {v['negative']}"
                 for k, v in res.summary.items()]
        return "\n".join(lines) + f"\nfailed replicates: {len(res.failures)}\n"
    return to_json(out) + "\n"


COMMANDS = {
    "fit": cmd_fit, "local-anova": cmd_local_anova, "anova": cmd_anova, "ftest": cmd_ftest,
    "vcm": cmd_vcm, "hstar": cmd_hstar, "simulate": cmd_simulate,
}


def run(argv=None, environ=None) -> int:
    """Parse ``argv``, run the subcommand, return the exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    environ = os.environ if environ is None else environ
    parser = build_parser()
    try:
        _apply_env(parser, argv, environ)
        args = parser.parse_args(argv)
        prov = provenance(args.command, _resolved(args), getattr(args, "seed", None))
        _emit(args, COMMANDS[args.command](args, prov))
    except InputError as e:
        print(f"lpanova: input error: {e}", file=sys.stderr)
        return 1
    except NumericalError as e:
        print(f"lpanova: numerical failure: {e}", file=sys.stderr)
        return 2
    except LpAnovaError as e:
        print(f"lpanova: error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"lpanova: input error: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
