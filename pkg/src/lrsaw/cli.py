"""Command-line entry point: ``lrsaw run|dist|enumerate|series|lace|mc|stable``.

Tables go to stdout (or ``--out``) as CSV; structured results as JSON.
The exit status is 0 unless an error was raised; failed checks inside a
``run`` are recorded in the report and do not change the status.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from contextlib import contextmanager

import numpy as np

from lrsaw import enumeration, harness, lace, montecarlo, stable, stepdist


LACE_ZERO_TOL = 1e-12


def _parse_klist(text: str, d: int) -> list[np.ndarray]:
    """``"0.5;1;2"`` (magnitudes along the first axis) or ``"0.5,0;0,1"`` (full vectors)."""
    out = []
    for item in text.split(";"):
        vals = [float(v) for v in item.split(",") if v.strip()]
        if len(vals) == 1:
            k = np.zeros(d)
            k[0] = vals[0]
        elif len(vals) == d:
            k = np.array(vals)
        else:
            raise ValueError(f"k entry {item!r} has {len(vals)} components, expected 1 or {d}")
        out.append(k)
    return out


def _parse_times(text: str | None) -> list[float]:
    return [float(t) for t in text.split(",")] if text else []


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _kstr(k) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(k))


@contextmanager
def _sink(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _emit_csv(args, header, rows):
    with _sink(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _emit_json(args, obj):
    with _sink(args.out) as fh:
        fh.write(json.dumps(harness._jsonable(obj), sort_keys=True, indent=2) + "\n")


def _dist(args):
    return stepdist.build_step_distribution(args.dim, args.alpha, args.spread, args.radius)


def _xcols(d):
    return [f"x_{j + 1}" for j in range(d)]


# ------------------------------------------------------------------ commands


def cmd_run(args):
    cfg = harness.ExperimentConfig.load(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    report = harness.run_pipeline(cfg)
    for v in report.verdicts:
        print(f"{v['status']:>13}  {v['check']}", file=sys.stderr)
    print(f"{cfg.output_dir}/report.json")


def cmd_dist(args):
    dist = _dist(args)
    if args.view == "fourier":
        ks = _parse_klist(args.k_list, dist.dimension) if args.k_list else list(stepdist.small_k_window(dist))
        rows = []
        for k in ks:
            omd = float(stepdist.one_minus_fourier(dist, k))
            rows.append([*k.tolist(), 1.0 - omd, omd])
        header = [f"k_{j + 1}" for j in range(dist.dimension)] + ["Dhat", "one_minus_Dhat"]
        if args.emit == "json":
            _emit_json(args, [dict(zip(header, r)) for r in rows])
        else:
            _emit_csv(args, header, rows)
        return
    if not dist.is_tabulated:
        raise ValueError("the support of an untabulated law is not listed; lower --radius")
    support = dist.support
    if args.emit == "json":
        _emit_json(args, {"params": dist.params(), "fingerprint": dist.fingerprint,
                          "support": [{"x": list(x), "probability": p} for x, p in support]})
    else:
        _emit_csv(args, _xcols(dist.dimension) + ["probability"], [[*x, p] for x, p in support])


def _table(args, resolved=True):
    dist = _dist(args)
    table = enumeration.enumerate_walks(dist, args.max_n, resolved=resolved, workers=args.workers)
    return dist, table


def cmd_enumerate(args):
    dist, table = _table(args)
    rows = []
    for n in range(table.max_n + 1):
        pts, vals = table.nonzero(n)
        for i in np.lexsort(pts.T[::-1]):
            rows.append([n, *pts[i].tolist(), float(vals[i])])
    _emit_csv(args, ["n", *_xcols(dist.dimension), "c_n_x"], rows)


def cmd_series(args):
    _, table = _table(args, resolved=False)
    c = table.totals
    rows = [[n, float(c[n]), float(c[n - 1] / c[n]) if n else math.nan] for n in range(table.max_n + 1)]
    _emit_csv(args, ["n", "c_n", "ratio"], rows)


def _zc_v(args, dist, table):
    zc = args.zc if args.zc is not None else enumeration.estimate_zc(table)[0]
    if getattr(args, "v_alpha", None) is not None:
        return zc, args.v_alpha
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return zc, stepdist.estimate_v_alpha(dist)[0]


def cmd_lace(args):
    dist = _dist(args)
    resolved = args.view != "constants" or dist.alpha > 2
    table = enumeration.enumerate_walks(dist, args.max_n, resolved=resolved, workers=args.workers)
    laces = lace.extract_pi(table, dist)
    if args.view == "constants":
        zc, v = _zc_v(args, dist, table)
        K, terms = lace.compute_K_alpha(laces, dist, zc, v)
        m2 = None
        if laces.moment2_by_n is not None:
            m2 = float((laces.moment2_by_n * zc ** np.arange(laces.max_n + 1)).sum())
        proxies = {k: v for k, v in terms.items() if "last_term" in k or k == "dK_dzc"}
        proxies.update(R=dist.truncation_radius, truncated_mass=dist.truncated_mass, max_n=laces.max_n)
        _emit_json(args, {"zc": zc, "A0": terms["A0"], "Xi": 1.0 / (zc * terms["A0"]), "K_alpha": K,
                          "Pi_moment2": m2, "v_alpha": v, "truncation_proxies": proxies})
        return
    rows = []
    n_grid = laces.grid_size
    half = n_grid // 2
    for n in range(2, laces.max_n + 1):
        arr = np.fft.fftshift(laces.pis[n])
        # entries are FFT round-trips; drop round-off relative to the largest value
        idx = np.argwhere(np.abs(arr) > LACE_ZERO_TOL * np.abs(arr).max(initial=0.0))
        for p in idx:
            rows.append([n, *(p - half).tolist(), float(arr[tuple(p)])])
    _emit_csv(args, ["n", *_xcols(dist.dimension), "pi_n_x"], rows)


def _sample(args, dist, extra=()):
    return montecarlo.sample_walks(dist, args.n, args.count, args.seed, method=args.method,
                                   extra_times=extra, workers=args.workers)


def cmd_mc(args):
    dist = _dist(args)
    if args.view != "cf":
        batch = _sample(args, dist)
        x = batch.endpoints
        _emit_csv(args, ["sample_id", "weight", *_xcols(dist.dimension)],
                  [[i, float(batch.weights[i]), *x[i].tolist()] for i in range(batch.count)])
        return
    ks = _parse_klist(args.k_list, dist.dimension)
    times = _parse_times(args.times)
    batch = _sample(args, dist, extra=[int(math.floor(args.n * t)) for t in times])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v = args.v_alpha if args.v_alpha is not None else stepdist.estimate_v_alpha(dist)[0]
    if args.K_alpha is not None:
        K = args.K_alpha
    else:
        table = enumeration.enumerate_walks(dist, args.lace_max_n, resolved=dist.alpha > 2)
        zc = enumeration.estimate_zc(table)[0]
        K = lace.compute_K_alpha(lace.extract_pi(table, dist), dist, zc, v)[0]
    ctx = montecarlo.ScalingContext(dist.dimension, dist.alpha, v, K, args.n)
    if args.fit_k:
        phis = [montecarlo.empirical_cf(batch, ctx, k)[0] for k in ks]
        K = montecarlo.fit_K_alpha(ks, phis, dist.alpha)
        ctx = montecarlo.ScalingContext(dist.dimension, dist.alpha, v, K, args.n)
    rows = []
    for k in ks:
        phi, se = montecarlo.empirical_cf(batch, ctx, k)
        tgt = ctx.endpoint_target(k)
        rows.append([_kstr(k), "1", phi, se, tgt, harness._z(phi, tgt, se)])
        if times:
            freqs = [k] * len(times)
            phi, se = montecarlo.empirical_cf_multi(batch, ctx, times, freqs)
            tgt = ctx.multi_target(times, freqs)
            rows.append([_kstr(k), " ".join(repr(t) for t in times), phi, se, tgt, harness._z(phi, tgt, se)])
    print(f"K_alpha={K!r} v_alpha={v!r}", file=sys.stderr)
    _emit_csv(args, ["k", "t_spec", "phi", "stderr", "target", "z_score"], rows)


def cmd_stable(args):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
    x = stable.sample_stable_increment(args.alpha, args.dt, args.dim, rng, args.count)
    if args.view != "cf":
        _emit_csv(args, ["sample_id", *_xcols(args.dim)], [[i, *x[i].tolist()] for i in range(args.count)])
        return
    law = stable.StableLawSpec(args.alpha, args.dt, args.dim)
    ks = _parse_klist(args.k_list, args.dim) if args.k_list else [
        np.eye(args.dim)[0] * s for s in np.linspace(0.1, 4.0, 20)
    ]
    rows = []
    for k in ks:
        phi, se = stable.sample_cf(x, k)
        tgt = stable.target_cf(law, k)
        rows.append([_kstr(k), phi, tgt, harness._z(phi, tgt, se)])
    _emit_csv(args, ["k", "phi_empirical", "phi_target", "z"], rows)


# ------------------------------------------------------------------ parser


def _model_flags(p, radius_default=None):
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--spread", type=int, default=1)
    p.add_argument("--radius", type=int, default=radius_default, required=radius_default is None)


def _common(p):
    p.add_argument("--out", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrsaw", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configured experiment")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("dist", help="step distribution support or Fourier scan")
    p.add_argument("view", nargs="?", choices=["fourier"])
    _model_flags(p)
    p.add_argument("--emit", choices=["csv", "json"], default="csv")
    p.add_argument("--k-list", help="';'-separated k (scalar = first axis)")
    _common(p)
    p.set_defaults(func=cmd_dist)

    for name, func, help_ in (("enumerate", cmd_enumerate, "exact c_n(x)"), ("series", cmd_series, "exact c_n totals")):
        p = sub.add_parser(name, help=help_)
        _model_flags(p)
        p.add_argument("--max-n", type=int, required=True)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--emit", choices=["csv"], default="csv")
        _common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("lace", help="lace coefficients or limit constants")
    p.add_argument("view", nargs="?", choices=["constants"])
    _model_flags(p)
    p.add_argument("--max-n", type=int, required=True)
    p.add_argument("--zc", type=float, help="override the ratio estimate of z_c")
    p.add_argument("--v-alpha", type=float, help="override the fitted v_alpha")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--emit", choices=["csv", "json"], default="csv")
    _common(p)
    p.set_defaults(func=cmd_lace)

    p = sub.add_parser("mc", help="sampled walks or their characteristic functions")
    p.add_argument("view", nargs="?", choices=["cf"])
    _model_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--method", choices=["rejection", "rosenbluth"], default="rosenbluth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--k-list", default="0.5;1;2")
    p.add_argument("--times", help="comma-separated t_1 < ... <= 1 for a multi-time row")
    p.add_argument("--v-alpha", type=float)
    p.add_argument("--K-alpha", type=float, help="use this K instead of the lace value")
    p.add_argument("--fit-k", action="store_true", help="fit K to the empirical endpoint CF")
    p.add_argument("--lace-max-n", type=int, default=4)
    p.add_argument("--emit", choices=["csv"], default="csv")
    _common(p)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("stable", help="stable-law increments or their CF check")
    p.add_argument("view", nargs="?", choices=["cf"])
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-list")
    p.add_argument("--emit", choices=["csv"], default="csv")
    _common(p)
    p.set_defaults(func=cmd_stable)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except BrokenPipeError:
        # downstream closed the pipe (e.g. `| head`); not an error of ours
        sys.stdout = None
        return 0
    except (ValueError, RuntimeError, OSError, KeyError, TypeError) as exc:
        print(f"lrsaw: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
