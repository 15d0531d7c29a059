"""Command-line experiment runner.

Usage::

    quantlap spectrum    --config exp.cfg --out results/ [--deterministic] [--assert]
    quantlap balance     --config exp.cfg --out results/
    quantlap asymptotics --config exp.cfg --out results/ --assert
    quantlap report      --out results/

Configuration files are flat ``key = value`` text; ``#`` starts a comment.
See ``CONFIG_KEYS`` for the accepted keys and their defaults.

Exit codes: 0 success, 2 configuration error, 3 numerical error,
4 an asserted tolerance failed.
"""

import argparse
import configparser
import csv
import glob
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .balance import t_iterate, write_log
from .bundles import InnerProductMatrix, MetricWeight, SectionBasis, hilb
from .errors import ConfigError, QuantlapError
from .geometry import VolumeForm, build_quadrature
from .oracle import (
    HarmonicBuilder,
    bergman_a1,
    cpn_spectrum,
    exact_balanced_eigenvalue,
    hessian_coefficients_round,
    sturm_liouville_spectrum,
)
from .quantization import assemble_pstarp
from .spectral import (
    bergman_asymptotics,
    eigendecompose,
    hessian_asymptotics,
    match_oracle,
    toeplitz_asymptotics,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 2, 3, 4

CONFIG_KEYS = {
    "metric": "round",
    "degrees": "2,4,8",
    "rank": "1",
    "twists": "",
    "volume": "round",
    "balance": "auto",
    "start": "hilb",
    "tol": "1e-9",
    "fit_tol": "0.05",
    "balance_tol": "1e-12",
    "max_iter": "10000",
    "oversample": "auto",
    "observable": "harmonic:1",
    "seed": "0",
    "jobs": "1",
    "output": "",
}

SAMPLE_POINTS = (np.array([0.7, 0.1, -0.4, -0.85]), np.array([0.3, 1.0, 2.0, 4.0]))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings."""

    metric: str
    degrees: tuple
    rank: int
    twists: tuple
    volume: str
    balance: str
    start: str
    tol: float
    fit_tol: float
    balance_tol: float
    max_iter: int
    oversample: str
    observable: str
    seed: int
    jobs: int
    output: str

    def weight(self):
        return parse_metric(self.metric)

    def volume_form(self):
        return parse_volume(self.volume)

    def basis(self, k):
        if self.rank == 1:
            return SectionBasis.line(k, self.twists[0] if self.twists else 0)
        return SectionBasis.split(k, *self.twists)

    def is_round(self):
        w = self.weight()
        return w.is_constant and self.volume_form().is_round and self.rank == 1

    def needs_balance(self):
        if self.balance == "auto":
            # split rank-2 bundles are not simple and have no balanced metric
            return self.rank == 1 and not self.is_round()
        return self.balance == "yes"

    def grid(self, basis):
        if self.oversample == "auto":
            factor = 1 if self.is_round() else 2
        else:
            factor = int(self.oversample)
        return build_quadrature(basis.max_degree, factor)

    def as_dict(self):
        d = asdict(self)
        d["degrees"] = list(self.degrees)
        d["twists"] = list(self.twists)
        return d


def parse_metric(text):
    """``round``, ``constant:c``, ``axial:c0,c1,..``, ``harmonics:l:m:c;..``, ``samples:path``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "round":
            return MetricWeight.round()
        if kind == "constant":
            return MetricWeight.constant(float(arg))
        if kind == "axial":
            return MetricWeight.axial([float(x) for x in arg.split(",") if x.strip()])
        if kind == "harmonics":
            terms = []
            for item in arg.split(";"):
                if item.strip():
                    l, m, c = item.split(":")
                    terms.append((int(l), int(m), float(c)))
            return MetricWeight.harmonics(terms)
        if kind == "samples":
            return MetricWeight.from_samples(arg.strip())
    except (ValueError, OSError) as exc:
        raise ConfigError(f"bad metric {text!r}: {exc}") from exc
    raise ConfigError(f"unknown metric family {kind!r}")


def parse_volume(text):
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind == "round":
        return VolumeForm.round()
    if kind == "exp_height":
        try:
            return VolumeForm.exp_height(float(arg))
        except ValueError as exc:
            raise ConfigError(f"bad volume {text!r}") from exc
    raise ConfigError(f"unknown volume form {kind!r}")


def _parse_int_list(text, name):
    try:
        return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError as exc:
        raise ConfigError(f"{name} must be a comma-separated list of integers") from exc


def _positive(value, name, cast=float):
    try:
        v = cast(value)
    except ValueError as exc:
        raise ConfigError(f"{name} must be a number") from exc
    if v <= 0:
        raise ConfigError(f"{name} must be positive")
    return v


def load_config(path=None, text=None):
    """Read and validate a config file (or string)."""
    if text is None:
        if path is None:
            text = ""
        else:
            try:
                with open(path) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    raw = dict(parser["experiment"])
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {**CONFIG_KEYS, **raw}
    degrees = _parse_int_list(values["degrees"], "degrees")
    if not degrees:
        raise ConfigError("degree list is empty")
    if min(degrees) < 1:
        raise ConfigError("degrees must be >= 1")
    rank = _positive(values["rank"], "rank", int)
    twists = _parse_int_list(values["twists"], "twists")
    if rank not in (1, 2):
        raise ConfigError("rank must be 1 or 2")
    if rank == 2 and len(twists) != 2:
        raise ConfigError("rank 2 needs twists = a,b")
    if rank == 1 and len(twists) > 1:
        raise ConfigError("rank 1 takes at most one twist")
    if values["balance"] not in ("auto", "yes", "no"):
        raise ConfigError("balance must be auto, yes or no")
    if values["start"] not in ("hilb", "identity", "random"):
        raise ConfigError("start must be hilb, identity or random")
    if values["oversample"] != "auto":
        _positive(values["oversample"], "oversample", int)
    cfg = ExperimentConfig(
        metric=values["metric"].strip(),
        degrees=tuple(sorted(set(degrees))),
        rank=rank,
        twists=twists,
        volume=values["volume"].strip(),
        balance=values["balance"],
        start=values["start"],
        tol=_positive(values["tol"], "tol"),
        fit_tol=_positive(values["fit_tol"], "fit_tol"),
        balance_tol=_positive(values["balance_tol"], "balance_tol"),
        max_iter=_positive(values["max_iter"], "max_iter", int),
        oversample=values["oversample"],
        observable=values["observable"].strip(),
        seed=int(values["seed"]),
        jobs=_positive(values["jobs"], "jobs", int),
        output=values["output"].strip(),
    )
    cfg.weight()
    cfg.volume_form()
    return cfg


def _header(cfg, command):
    return [
        f"quantlap {__version__} {command}",
        "config " + json.dumps(cfg.as_dict(), sort_keys=True),
    ]


def _start_matrix(cfg, basis, h, volume):
    if cfg.start == "identity":
        return InnerProductMatrix(np.eye(basis.N))
    H = hilb(h, basis, volume=volume)
    if cfg.start == "random":
        rng = np.random.default_rng(cfg.seed)
        X = rng.standard_normal((basis.N, basis.N)) + 1j * rng.standard_normal((basis.N, basis.N))
        P = X @ X.conj().T / basis.N
        return InnerProductMatrix(H.matrix + 0.5 * np.trace(H.matrix).real / basis.N * P)
    return H


def _embedding(cfg, k, clock):
    basis = cfg.basis(k)
    h, volume = cfg.weight(), cfg.volume_form()
    grid = cfg.grid(basis)
    H = _start_matrix(cfg, basis, h, volume)
    state = None
    if cfg.needs_balance() or cfg.start != "hilb":
        state = t_iterate(H, basis, grid, volume, cfg.balance_tol, cfg.max_iter, clock=clock)
        H = state.H
    return basis, H, grid, volume, state


def _map_degrees(cfg, fn):
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(fn, cfg.degrees))
    return [fn(k) for k in cfg.degrees]


def _zero_clock():
    return 0.0


def cmd_spectrum(cfg, out, deterministic=False, do_assert=False):
    """Assemble and diagonalise ``P^*P`` per degree; write CSV/JSON reports."""
    clock = _zero_clock if deterministic else time.perf_counter
    failures = []

    def run(k):
        basis, H, grid, volume, _ = _embedding(cfg, k, clock)
        form = assemble_pstarp(basis, H, grid, volume)
        report = eigendecompose(form)
        extra = {}
        status = []
        if cfg.is_round():
            spec = cpn_spectrum(1, k)
            match_oracle(report, spec.values(), spec.indices())
            exact = np.array([exact_balanced_eigenvalue(int(i), k) for i in report.cluster_i])
            err = np.abs(report.eigenvalues - exact)
            extra = {"oracle_nu": exact, "nu_err": err}
            if err.max() >= cfg.tol:
                status.append(f"k={k}: max |nu - exact| = {err.max():.3e} >= {cfg.tol:g}")
        elif cfg.rank == 1 and cfg.weight().is_constant:
            count = min(report.eigenvalues.size, 64)
            sl = sturm_liouville_spectrum(volume, count)
            lam = np.full(report.eigenvalues.size, np.nan)
            lam[:count] = sl
            match_oracle(report, lam, np.arange(lam.size))
            rel = np.abs(report.rescaled[1:9] - sl[1:9]) / sl[1:9]
            if rel.max() >= cfg.fit_tol:
                status.append(f"k={k}: max relative error vs Sturm-Liouville {rel.max():.3e}")
        else:
            lo = report.eigenvalues[0]
            if lo < -1e-9:
                status.append(f"k={k}: negative eigenvalue {lo:.3e}")
        header = _header(cfg, "spectrum") + [f"k {k}"]
        report.to_csv(os.path.join(out, f"spectrum_k{k}.csv"), header=header, extra=extra)
        report.to_json(os.path.join(out, f"spectrum_k{k}.json"), meta={
            "version": __version__, "config": cfg.as_dict(),
        })
        return status

    for status in _map_degrees(cfg, run):
        failures.extend(status)
    return failures if do_assert else []


def cmd_balance(cfg, out, deterministic=False, do_assert=False):
    """Run the T-iteration per degree and write ``balance_k*.csv`` logs."""
    clock = _zero_clock if deterministic else time.perf_counter
    failures = []

    def run(k):
        basis = cfg.basis(k)
        h, volume = cfg.weight(), cfg.volume_form()
        grid = cfg.grid(basis)
        H0 = _start_matrix(cfg, basis, h, volume)
        state = t_iterate(H0, basis, grid, volume, cfg.balance_tol, cfg.max_iter, clock=clock)
        path = os.path.join(out, f"balance_k{k}.csv")
        write_log(state, path)
        with open(path) as fh:
            body = fh.read()
        with open(path, "w") as fh:
            for line in _header(cfg, "balance") + [f"k {k}"]:
                fh.write(f"# {line}\n")
            fh.write(body)
        return [] if state.converged else [f"k={k}: not converged after {state.iterations}"]

    for status in _map_degrees(cfg, run):
        failures.extend(status)
    return failures if do_assert else []


def _observable(cfg):
    kind, _, arg = cfg.observable.partition(":")
    if kind == "constant":
        return (lambda t, theta: np.ones_like(np.asarray(t, dtype=float))), None
    if kind == "harmonic":
        parts = [int(x) for x in arg.split(":") if x]
        if not parts:
            raise ConfigError("harmonic observable needs a degree")
        i = parts[0]
        m = parts[1] if len(parts) > 1 else i
        if not 0 <= m <= i:
            raise ConfigError("harmonic order must satisfy 0 <= m <= i")
        return HarmonicBuilder(i).unit_function(m, "re"), i
    raise ConfigError(f"unknown observable {cfg.observable!r}")


def cmd_asymptotics(cfg, out, deterministic=False, do_assert=False):
    """Fit the Hessian, Bergman and Toeplitz expansions; write JSON and CSV."""
    if len(cfg.degrees) < 3:
        raise ConfigError("asymptotic fits need at least 3 degrees")
    if cfg.rank != 1:
        raise ConfigError("asymptotic fits are implemented for line bundles")
    phi, degree = _observable(cfg)
    h, volume = cfg.weight(), cfg.volume_form()
    nuisance = tuple(p for p in (3, 4) if len(cfg.degrees) >= 2 + (p - 2))
    hess = hessian_asymptotics(phi, cfg.degrees, h, volume, nuisance=nuisance)
    rows = [("a1", hess.a1, None), ("a2", hess.a2, None)]
    grid = build_quadrature(max(8, 2 * (degree or 0) + 2))
    fvals = phi(grid.t, grid.theta)
    if cfg.is_round():
        a1, a2 = hessian_coefficients_round(fvals, grid)
        rows = [("a1", hess.a1, a1), ("a2", hess.a2, a2)]
    t, theta = SAMPLE_POINTS
    bnuis = (2, 3)[: max(0, len(cfg.degrees) - 2)]
    berg = bergman_asymptotics(h, cfg.degrees, t, theta, volume, nuisance=bnuis)
    a1_oracle = bergman_a1(h, t, theta) if volume.is_round else None
    for j in range(t.size):
        rows.append((f"bergman_A1[{j}]", float(berg.coefficients[0][j]),
                     None if a1_oracle is None else float(a1_oracle[j])))
    toe = toeplitz_asymptotics(phi, h, cfg.degrees, t, theta, volume, nuisance=bnuis)
    if volume.is_round and degree is not None:
        fx = phi(t, theta)
        b1 = bergman_a1(h, t, theta) * fx - degree * (degree + 1) * fx
        for j in range(t.size):
            rows.append((f"toeplitz_b1[{j}]", float(toe.coefficients[0][j]), float(b1[j])))

    failures = []
    with open(os.path.join(out, "asymptotics.csv"), "w", newline="") as fh:
        for line in _header(cfg, "asymptotics"):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "fitted", "oracle", "rel_err"])
        for name, fitted, oracle in rows:
            rel = ""
            if oracle is not None:
                if abs(oracle) < 1e-12:
                    err = abs(fitted)
                    ok = err < 1e-9
                else:
                    err = abs(fitted - oracle) / abs(oracle)
                    ok = err < cfg.fit_tol
                rel = repr(float(err))
                if not ok:
                    failures.append(f"{name}: fitted {fitted:.6g} vs oracle {oracle:.6g}")
            w.writerow([name, repr(float(fitted)), "" if oracle is None else repr(float(oracle)), rel])
    payload = {
        "version": __version__,
        "config": cfg.as_dict(),
        "hessian": hess.to_dict(),
        "bergman": berg.to_dict(),
        "toeplitz": toe.to_dict(),
    }
    with open(os.path.join(out, "asymptotics.json"), "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    return failures if do_assert else []


def cmd_report(out):
    """Summarise spectrum, balance and asymptotics outputs in ``summary.csv``."""
    rows = []
    for path in sorted(glob.glob(os.path.join(out, "spectrum_k*.csv"))):
        data = _read_csv(path)
        errs = [float(r["abs_err"]) for r in data if r.get("abs_err") not in ("", "nan", None)]
        nu_err = [float(r["nu_err"]) for r in data if r.get("nu_err")]
        rows.append((os.path.basename(path), "max_abs_err_rescaled", max(errs) if errs else ""))
        if nu_err:
            rows.append((os.path.basename(path), "max_nu_err", max(nu_err)))
    for path in sorted(glob.glob(os.path.join(out, "balance_k*.csv"))):
        data = _read_csv(path)
        rows.append((os.path.basename(path), "iterations", int(data[-1]["iter"])))
        rows.append((os.path.basename(path), "final_residual", float(data[-1]["residual"])))
    path = os.path.join(out, "asymptotics.csv")
    if os.path.exists(path):
        for r in _read_csv(path):
            rows.append(("asymptotics.csv", r["quantity"], r["fitted"]))
    if not rows:
        raise ConfigError(f"no results found in {out}")
    with open(os.path.join(out, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "quantity", "value"])
        w.writerows(rows)
    width = max(len(r[0]) for r in rows)
    for src, q, v in rows:
        print(f"{src:<{width}}  {q:<24} {v}")
    return []


def _read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def build_parser():
    p = argparse.ArgumentParser(prog="quantlap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("spectrum", "balance", "asymptotics", "report"):
        s = sub.add_parser(name)
        if name != "report":
            s.add_argument("--config", help="flat key = value config file")
        s.add_argument("--out", help="output directory")
        s.add_argument("--deterministic", action="store_true",
                       help="reproducible output (no wall-clock timings)")
        s.add_argument("--assert", dest="do_assert", action="store_true",
                       help="exit with code 4 if a tolerance check fails")
    return p


def _error(code, exc):
    msg = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(msg), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            out = args.out or "."
            cmd_report(out)
            return EXIT_OK
        cfg = load_config(args.config)
        out = args.out or cfg.output or "."
        os.makedirs(out, exist_ok=True)
        cmd = {"spectrum": cmd_spectrum, "balance": cmd_balance,
               "asymptotics": cmd_asymptotics}[args.command]
        failures = cmd(cfg, out, args.deterministic, args.do_assert)
    except ConfigError as exc:
        return _error(EXIT_CONFIG, exc)
    except (QuantlapError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _error(EXIT_NUMERIC, exc)
    if failures:
        for f in failures:
            print(f"assertion failed: {f}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
