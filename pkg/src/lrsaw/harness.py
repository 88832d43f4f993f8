"""Seeded end-to-end experiments and versioned JSON reports.

A run builds the step law, enumerates exact walk counts, extracts lace
coefficients and the limit constants, samples walks at each requested
length and compares the empirical characteristic functions and mean-r
displacements with their limits.  Every numeric output is written to CSV
tables; the JSON report collects constants, truncation proxies and
verdicts.  Its ``body`` depends only on the configuration and seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from lrsaw import enumeration, lace, montecarlo, stable, stepdist

SCHEMA = 1
RESOLVED_GRID_LIMIT = 2_000_000  # grid points per table before falling back to totals


# ------------------------------------------------------------------ config


@dataclass
class ModelConfig:
    d: int
    alpha: float
    L: int
    R: int


@dataclass
class EnumerationConfig:
    max_n: int = 4
    resolved: bool | None = None  # None: resolve when the grid is small


@dataclass
class MCConfig:
    n_list: list = field(default_factory=lambda: [64, 256, 1024])
    count: int = 10_000
    method: str = "rosenbluth"
    seed: int = 0
    streams: int = montecarlo.DEFAULT_STREAMS
    workers: int = 1
    r: float = 1.0


@dataclass
class ExperimentConfig:
    model: ModelConfig
    enumeration: EnumerationConfig = field(default_factory=EnumerationConfig)
    mc: MCConfig | None = None
    cf_grid: list = field(default_factory=list)
    times: list = field(default_factory=list)  # [{"t": [...], "k": [[...], ...]}, ...]
    stable_samples: int = 0
    K_alpha: float | None = None  # override of the lace value
    v_alpha: float | None = None  # override of the fitted value
    output_dir: str = "lrsaw-out"

    def __post_init__(self):
        m = self.model
        if m.d < 1 or m.L < 1 or m.R < m.L or not m.alpha > 0:
            raise ValueError(f"invalid model {m}")
        for k in self.cf_grid:
            if len(k) != m.d:
                raise ValueError(f"cf_grid vector {k} has wrong dimension")
        for spec in self.times:
            if len(spec["t"]) != len(spec["k"]):
                raise ValueError(f"times spec {spec} has mismatched t and k")
        if self.mc is not None and self.mc.method not in ("rejection", "rosenbluth"):
            raise ValueError(f"unknown MC method {self.mc.method!r}")

    @property
    def alpha_eff(self) -> float:
        return min(self.model.alpha, 2.0)

    @property
    def out_of_regime(self) -> bool:
        return not self.model.d > 2 * self.alpha_eff

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        model = ModelConfig(**raw.pop("model"))
        enum = EnumerationConfig(**raw.pop("enumeration", {}))
        mc_raw = raw.pop("mc", None)
        mc = MCConfig(**mc_raw) if mc_raw is not None else None
        return cls(model=model, enumeration=enum, mc=mc, **raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        body = {k: v for k, v in self.to_dict().items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


# ------------------------------------------------------------------ report


@dataclass
class Report:
    constants: dict
    tables: dict
    verdicts: list
    provenance: dict
    config: dict
    generated_at: str = ""
    schema: int = SCHEMA

    def body(self) -> dict:
        return {
            "schema": self.schema,
            "config": self.config,
            "constants": self.constants,
            "tables": self.tables,
            "verdicts": self.verdicts,
            "provenance": self.provenance,
        }

    def body_json(self) -> str:
        return json.dumps(_jsonable(self.body()), sort_keys=True, indent=2)

    def to_json(self) -> str:
        doc = {"schema": self.schema, "generated_at": self.generated_at, "body": _jsonable(self.body())}
        return json.dumps(doc, sort_keys=True, indent=2)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# ------------------------------------------------------------------ tables


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _kstr(k) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(k))


def _z(emp, target, se):
    if se > 0:
        return (emp - target) / se
    return 0.0 if emp == target else math.inf


def theorem_table(report_kind: str, **inputs):
    """``(header, rows)`` for one theorem comparison.

    * ``endpoint``: ``batches`` and ``contexts`` keyed by ``n``, ``cf_grid``.
    * ``mean_r``: ``batches`` keyed by ``n``, exponent ``r``; the last
      column repeats the least-squares slope of ``log xi`` on ``log n``.
    * ``findim``: ``batches``, ``contexts``, ``specs`` (list of
      ``(times, freqs)``).
    """
    if report_kind == "endpoint":
        batches, ctxs, grid = _need(inputs, "batches", "contexts", "cf_grid")
        header = ["n", "k", "empirical", "target", "stderr", "z"]
        rows = []
        for n in sorted(batches):
            for k in grid:
                phi, se = montecarlo.empirical_cf(batches[n], ctxs[n], k)
                tgt = ctxs[n].endpoint_target(k)
                rows.append([n, _kstr(k), phi, tgt, se, _z(phi, tgt, se)])
        return header, rows
    if report_kind == "mean_r":
        batches, r = _need(inputs, "batches", "r")
        alpha = inputs.get("alpha")
        ns = sorted(batches)
        est = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for n in ns:
                est.append(montecarlo.estimate_xi_r(batches[n], r, alpha))
        slope = mean_r_slope(ns, [x for x, _ in est]) if len(ns) >= 2 else math.nan
        header = ["n", "xi_r", "stderr", "log_n", "log_xi", "slope"]
        rows = [[n, x, se, math.log(n), math.log(x), slope] for n, (x, se) in zip(ns, est)]
        return header, rows
    if report_kind == "findim":
        batches, ctxs, specs = _need(inputs, "batches", "contexts", "specs")
        header = ["n", "t_spec", "k_spec", "empirical", "target", "stderr", "z"]
        rows = []
        for n in sorted(batches):
            for times, freqs in specs:
                phi, se = montecarlo.empirical_cf_multi(batches[n], ctxs[n], times, freqs)
                tgt = ctxs[n].multi_target(times, freqs)
                rows.append([n, _kstr(times), " | ".join(_kstr(k) for k in freqs), phi, tgt, se, _z(phi, tgt, se)])
        return header, rows
    raise ValueError(f"unknown report kind {report_kind!r}")


def _need(inputs, *names):
    missing = [n for n in names if n not in inputs or inputs[n] is None]
    if missing:
        raise ValueError(f"missing upstream artifacts: {', '.join(missing)}")
    return [inputs[n] for n in names]


def mean_r_slope(ns, xis) -> float:
    """Least-squares slope of ``log xi`` against ``log n``."""
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(xis, dtype=float)), 1)[0])


# ------------------------------------------------------------------ pipeline


def _verdict(name, passed, table, rows, theorem, out_of_regime, **detail):
    status = "pass" if passed else "fail"
    if theorem and out_of_regime:
        status = "informational"
    return {"check": name, "status": status, "table": table, "rows": rows, **detail}


def _choose_resolved(cfg: ExperimentConfig) -> bool:
    if cfg.enumeration.resolved is not None:
        return cfg.enumeration.resolved
    n_grid = 2 * cfg.enumeration.max_n * cfg.model.R + 1
    return n_grid**cfg.model.d <= RESOLVED_GRID_LIMIT


def run_pipeline(config: ExperimentConfig) -> Report:
    """Run every enabled stage and write tables plus ``report.json`` to ``config.output_dir``."""
    cfg = config
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = cfg.model
    tables: dict = {}
    verdicts: list = []
    oor = cfg.out_of_regime

    # step distribution
    dist = stepdist.build_step_distribution(m.d, m.alpha, m.L, m.R)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v_fit, v_resid = stepdist.estimate_v_alpha(dist)
    v_alpha = cfg.v_alpha if cfg.v_alpha is not None else v_fit
    constants = {
        "normalization": dist.normalization,
        "truncated_mass": dist.truncated_mass,
        "R": m.R,
        "v_alpha": v_alpha,
        "v_alpha_fit": v_fit,
        "v_alpha_fit_residual": v_resid,
        "out_of_regime": oor,
    }

    # enumeration
    max_n = cfg.enumeration.max_n
    resolved = _choose_resolved(cfg)
    table = enumeration.enumerate_walks(dist, max_n, resolved=resolved)
    ratios = [math.nan] + [float(table.totals[n - 1] / table.totals[n]) for n in range(1, max_n + 1)]
    write_csv(out / "series.csv", ["n", "c_n", "ratio"],
              [[n, float(table.totals[n]), ratios[n]] for n in range(max_n + 1)])
    tables["series"] = "series.csv"
    if table.resolved:
        rows = []
        for n in range(max_n + 1):
            pts, vals = table.nonzero(n)
            order = np.lexsort(pts.T[::-1])
            rows.extend([n, *pts[i].tolist(), float(vals[i])] for i in order)
        write_csv(out / "enumeration.csv", ["n", *[f"x_{j + 1}" for j in range(m.d)], "c_n_x"], rows)
        tables["enumeration"] = "enumeration.csv"

    zc = None
    K = cfg.K_alpha
    if max_n >= 4:
        zc, _ = enumeration.estimate_zc(table)
        constants["zc"] = zc
        laces = lace.extract_pi(table, dist)
        try:
            K_lace, terms = lace.compute_K_alpha(laces, dist, zc, v_alpha)
            constants.update({
                "K_alpha_lace": K_lace,
                "A0": terms["A0"],
                "Xi": 1.0 / (zc * terms["A0"]),
                "truncation_proxies": {k: v for k, v in terms.items() if "last_term" in k or k == "dK_dzc"},
                "max_n": max_n,
            })
            if K is None:
                K = K_lace
            cnz = [float(table.totals[n] * zc**n) for n in (max_n - 1, max_n)]
            change = abs(cnz[1] - cnz[0]) / abs(cnz[0])
            xi_dev = abs(cnz[1] - constants["Xi"]) / constants["Xi"]
            constants["cn_zc_n"] = cnz
            verdicts.append(_verdict(
                "series_stability", change < 0.10 and xi_dev < 0.20, "series", [max_n - 1, max_n], False, oor,
                relative_change=change, relative_to_Xi=xi_dev,
            ))
        except ValueError as exc:
            constants["lace_error"] = str(exc)
    if K is None:
        K = 1.0
    constants["K_alpha"] = K

    # Monte Carlo
    if cfg.mc is not None and cfg.mc.n_list:
        mc = cfg.mc
        batches, ctxs = {}, {}
        specs = [(tuple(s["t"]), tuple(np.asarray(k, dtype=float) for k in s["k"])) for s in cfg.times]
        for i, n in enumerate(sorted(mc.n_list)):
            extra = {int(math.floor(n * t)) for spec in cfg.times for t in spec["t"]}
            batches[n] = montecarlo.sample_walks(
                dist, n, mc.count, mc.seed + i, method=mc.method, extra_times=sorted(extra),
                n_streams=mc.streams, workers=mc.workers,
            )
            ctxs[n] = montecarlo.ScalingContext(m.d, m.alpha, v_alpha, K, n)
        constants["mc"] = {
            str(n): {"ess": b.ess, "trials": b.trials, "dead": b.dead, "count": b.count} for n, b in batches.items()
        }
        ns = sorted(batches)

        if cfg.cf_grid:
            header, rows = theorem_table("endpoint", batches=batches, contexts=ctxs, cf_grid=cfg.cf_grid)
            write_csv(out / "endpoint.csv", header, rows)
            tables["endpoint"] = "endpoint.csv"
            for j, k in enumerate(cfg.cf_grid):
                if not np.any(k):
                    continue
                idx = [i * len(cfg.cf_grid) + j for i in range(len(ns))]
                devs = [abs(rows[i][2] - rows[i][3]) for i in idx]
                dec = all(b < a for a, b in zip(devs[:-1], devs[1:]))
                verdicts.append(_verdict(
                    f"endpoint_convergence k={_kstr(k)}", dec and devs[-1] < 0.05, "endpoint", idx, True, oor,
                    deviations=devs, z_last=rows[idx[-1]][5],
                ))

        header, rows = theorem_table("mean_r", batches=batches, r=mc.r, alpha=m.alpha)
        write_csv(out / "mean_r.csv", header, rows)
        tables["mean_r"] = "mean_r.csv"
        if len(ns) >= 2 and m.alpha != 2:
            slope = rows[0][5]
            target = 1.0 / cfg.alpha_eff
            verdicts.append(_verdict(
                "mean_r_exponent", abs(slope - target) <= 0.1 * target, "mean_r", list(range(len(ns))), True, oor,
                slope=slope, target=target,
            ))

        if specs:
            header, rows = theorem_table("findim", batches=batches, contexts=ctxs, specs=specs)
            write_csv(out / "findim.csv", header, rows)
            tables["findim"] = "findim.csv"
            last = len(ns) - 1
            for j, (times, freqs) in enumerate(specs):
                i = last * len(specs) + j
                verdicts.append(_verdict(
                    f"findim_factorization t={_kstr(times)}", abs(rows[i][6]) <= 3, "findim", [i], True, oor, z=rows[i][6],
                ))

    # stable reference self-test
    if cfg.stable_samples > 0:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.mc.seed if cfg.mc else 0)))
        x = stable.sample_stable_increment(cfg.alpha_eff, 1.0, m.d, rng, cfg.stable_samples)
        law = stable.StableLawSpec(cfg.alpha_eff, 1.0, m.d)
        grid = [np.eye(m.d)[0] * s for s in np.linspace(0.1, 4.0, 20)]
        rows = []
        for k in grid:
            phi, se = stable.sample_cf(x, k)
            tgt = stable.target_cf(law, k)
            rows.append([_kstr(k), phi, tgt, se, _z(phi, tgt, se)])
        write_csv(out / "stable.csv", ["k", "phi_empirical", "phi_target", "stderr", "z"], rows)
        tables["stable"] = "stable.csv"
        max_z, sup = stable.cf_distance([(k, r[1], r[3]) for k, r in zip(grid, rows)],
                                        lambda k: stable.target_cf(law, k))
        verdicts.append(_verdict("stable_self_test", max_z < 4, "stable", list(range(len(rows))), False, oor,
                                 max_z=max_z, sup_abs=sup,
                                 calibration_residual=stable.calibration_residual(cfg.alpha_eff)))

    digests = {name: hashlib.sha256((out / path).read_bytes()).hexdigest() for name, path in tables.items()}
    report = Report(
        constants=constants,
        tables=tables,
        verdicts=verdicts,
        provenance={
            "config_sha256": cfg.digest(),
            "seed": cfg.mc.seed if cfg.mc else None,
            "version": f"lrsaw {_version()}",
            "table_sha256": digests,
            "dist_fingerprint": dist.fingerprint,
        },
        config={k: v for k, v in cfg.to_dict().items() if k != "output_dir"},
        generated_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )
    report.write(out / "report.json")
    return report


def load_report_body(path) -> str:
    """Canonical body text of a written report (timestamps excluded)."""
    doc = json.loads(Path(path).read_text())
    return json.dumps(doc["body"], sort_keys=True, indent=2)


__all__ = [
    "ExperimentConfig",
    "ModelConfig",
    "EnumerationConfig",
    "MCConfig",
    "Report",
    "run_pipeline",
    "theorem_table",
    "mean_r_slope",
    "write_csv",
    "load_report_body",
]
