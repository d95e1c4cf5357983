"""Command line front end: ``check-config``, ``run`` and ``langevin-demo``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .certify import check_exp_certificate, check_practical_certificate
from .config import ExperimentConfig, load_config, parse_config, resolved
from .estimate import (
    check_martingale_inequality,
    estimate_attractivity,
    estimate_ball_stability,
    estimate_boundedness,
    estimate_exponent,
    zero_crossing_frequency,
)
from .exceptions import ConfigError, SdeStabError
from .model import check_linear_growth, check_lipschitz
from .noise import simulate_ensemble

log = logging.getLogger("sdestab")

EXIT_OK = 0
EXIT_EXPECTATION = 1
EXIT_ERROR = 2
MAX_LISTED_VIOLATIONS = 20


class PhaseError(SdeStabError):
    def __init__(self, phase, cause):
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")
        self.phase = phase


@dataclass
class RunSummary:
    document: dict
    timings: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(e["passed"] for e in self.document["expectations"])

    @property
    def exit_status(self) -> int:
        return EXIT_OK if self.ok else EXIT_EXPECTATION


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


class _Writer:
    """Writes files under one directory and can roll them back."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written = []

    def write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_text(text)
        self.written.append(path)
        return path

    def rollback(self):
        for path in self.written:
            path.unlink(missing_ok=True)


def _expect(expectations, check, expected, observed, passed):
    expectations.append({"check": check, "expected": expected, "observed": observed, "passed": bool(passed)})


def run(config: ExperimentConfig, out_dir=None, *, threads: int = 1,
        write_files: bool = True) -> RunSummary:
    """Execute every configured phase and write the reports.

    Phases: regularity, certificates, simulation, estimators, exponent.
    Output bytes depend only on ``config`` (``threads`` affects speed only).
    """
    out_dir = Path(out_dir if out_dir is not None else config.output_dir)
    writer = _Writer(out_dir)
    doc = {
        "tool": {"name": "sdestab", "version": __version__},
        "config": resolved(config),
        "regularity": [],
        "certificates": {},
        "estimates": {},
        "exponent": None,
        "expectations": [],
    }
    timings = {}
    expectations = doc["expectations"]
    phase = "setup"
    try:
        if write_files:
            out_dir.mkdir(parents=True, exist_ok=True)
        model = config.build_model()

        phase = "regularity"
        t_start = time.perf_counter()
        if config.regularity is not None:
            rb = config.regularity
            sampler = config.build_sampler()
            for check in (check_linear_growth, check_lipschitz):
                rep = check(model, rb.C, sampler, rb.n)
                doc["regularity"].append(rep.to_dict(MAX_LISTED_VIOLATIONS))
                if rb.expect:
                    _expect(expectations, f"regularity.{rep.condition}", rb.expect,
                            "pass" if rep.passed else "fail", (rb.expect == "pass") == rep.passed)
        timings[phase] = time.perf_counter() - t_start

        phase = "certificates"
        t_start = time.perf_counter()
        certs = config.certificates
        if certs.exp is not None or certs.practical is not None:
            V = config.build_lyapunov()
            sampler = config.build_sampler()
            n = config.sampler.n
            if certs.exp is not None:
                rep = check_exp_certificate(V, model, config.build_exp_certificate(), sampler, n)
                doc["certificates"]["exp"] = rep.to_dict(MAX_LISTED_VIOLATIONS)
                if certs.exp.expect:
                    _expect(expectations, "certificates.exp", certs.exp.expect,
                            "pass" if rep.passed else "fail", (certs.exp.expect == "pass") == rep.passed)
            if certs.practical is not None:
                rep = check_practical_certificate(V, model, config.build_practical_certificate(), sampler, n,
                                                  certs.practical.t_max)
                doc["certificates"]["practical"] = rep.to_dict(MAX_LISTED_VIOLATIONS)
                if certs.practical.expect:
                    _expect(expectations, "certificates.practical", certs.practical.expect,
                            "pass" if rep.passed else "fail", (certs.practical.expect == "pass") == rep.passed)
        timings[phase] = time.perf_counter() - t_start

        phase = "simulation"
        t_start = time.perf_counter()
        ensemble = None
        if config.ensemble is not None and config.grid is not None:
            eb = config.ensemble
            ensemble = simulate_ensemble(model, eb.x0, config.build_grid(), eb.trials, eb.seed, eb.scheme,
                                         threads=threads)
            doc["simulation"] = {"trials": ensemble.trials, "diverged": ensemble.diverged_count,
                                 "final_time": ensemble.grid.T}
            if eb.write_paths and write_files:
                with open(out_dir / "paths.csv", "w", newline="") as fh:
                    writer.written.append(out_dir / "paths.csv")
                    ensemble.write_csv(fh)
        timings[phase] = time.perf_counter() - t_start

        phase = "estimators"
        t_start = time.perf_counter()
        est = config.estimators
        reports = []
        if est.boundedness is not None:
            reports.append((est.boundedness, estimate_boundedness(ensemble, est.boundedness.alpha, est.boundedness.c)))
        if est.ball_stability is not None:
            b = est.ball_stability
            reports.append((b, estimate_ball_stability(ensemble, b.k, b.r, b.delta)))
        if est.attractivity is not None:
            a = est.attractivity
            reports.append((a, estimate_attractivity(ensemble, a.k, a.T, a.c)))
        if est.zero_crossing is not None:
            reports.append((est.zero_crossing, zero_crossing_frequency(ensemble, est.zero_crossing.tol)))
        if est.martingale is not None:
            mb = est.martingale
            seed = mb.seed if mb.seed is not None else (config.ensemble.seed if config.ensemble else 0)
            g = np.asarray(mb.g, dtype=float)
            rep = check_martingale_inequality(lambda s: g, mb.alpha, mb.beta, mb.T, mb.trials, seed, mb.dt,
                                              threads=threads)
            reports.append((mb, rep))
        for block, rep in reports:
            doc["estimates"][rep.name] = rep.to_dict()
            if write_files:
                writer.write(f"{rep.name}.csv", rep.to_csv())
            expect = getattr(block, "expect", None)
            if rep.name == "martingale_inequality":
                if expect:
                    holds = rep.extra["bound_holds"]
                    _expect(expectations, "estimates.martingale_inequality", expect,
                            "pass" if holds else "fail", (expect == "pass") == holds)
            elif expect is not None:
                _expect(expectations, f"estimates.{rep.name}", {"p_hat_min": expect.p_hat_min},
                        rep.p_hat, rep.p_hat >= expect.p_hat_min)
        timings[phase] = time.perf_counter() - t_start

        phase = "exponent"
        t_start = time.perf_counter()
        if est.exponent is not None:
            eb = est.exponent
            rep = estimate_exponent(ensemble, eb.r, eb.eps_floor)
            doc["exponent"] = rep.to_dict()
            if write_files:
                writer.write("exponent.csv", rep.to_csv())
            if eb.expect is not None:
                p90 = rep.p90_slope
                _expect(expectations, "exponent.p90_slope", {"p90_slope_max": eb.expect.p90_slope_max},
                        p90, p90 is not None and p90 <= eb.expect.p90_slope_max)
        timings[phase] = time.perf_counter() - t_start

        doc["status"] = "ok" if all(e["passed"] for e in expectations) else "expectation_failed"
        summary = RunSummary(doc, timings)
        if write_files:
            writer.write("summary.json", _dumps(doc))
            # wall-clock lives outside summary.json so the summary stays byte-deterministic
            writer.write("timings.json", _dumps({"phases": timings, "threads": threads}))
        summary.files = [str(p) for p in writer.written]
        return summary
    except Exception as exc:
        writer.rollback()
        raise PhaseError(phase, exc) from exc


def shipped_config_data() -> dict:
    return json.loads(resources.files("sdestab").joinpath("configs/langevin.json").read_text())


def langevin_demo_config(alpha=None, beta=None, seed=None) -> ExperimentConfig:
    """Shipped Langevin config, with constants and domains rederived when alpha/beta change."""
    data = shipped_config_data()
    if alpha is not None or beta is not None:
        a = data["model"]["alpha"] if alpha is None else alpha
        b = data["model"]["beta"] if beta is None else beta
        r = math.sqrt(b * b + 1)
        data["model"].update(alpha=a, beta=b)
        # |a x| and |b| are both bounded by C (1 + |x|) once C >= max(|a|, |b|)
        data["regularity"]["C"] = max(1.0, abs(a), abs(b))
        data["certificates"]["exp"].update(c2=2 * a, rho=b * b + 1)
        data["certificates"].pop("practical", None)
        data["sampler"].update(r_min=r + 0.1, r_max=10 * r)
        est = data["estimators"]
        est["ball_stability"].update(r=r, k=max(est["ball_stability"]["k"], 2 * r))
        est["attractivity"].update(k=2 * r)
        est["exponent"].update(r=r)
        for block in est.values():
            if isinstance(block.get("expect"), dict):
                block.pop("expect")
    if seed is not None:
        data["ensemble"]["seed"] = seed
        data["estimators"]["martingale"]["seed"] = seed
    return parse_config(data)


def _print_summary(summary: RunSummary, out=sys.stdout):
    doc = summary.document
    exp = doc["certificates"].get("exp")
    if exp:
        print(f"exp certificate: {exp['status']} ({exp['samples']} samples); "
              f"r={exp['radius']:.5f} rate={exp['rate']:g} stable={exp['stable']}", file=out)
    prac = doc["certificates"].get("practical")
    if prac:
        print(f"practical certificate: {prac['status']}", file=out)
    for name, rep in doc["estimates"].items():
        print(f"{name}: p_hat={rep['p_hat']:.4f} [{rep['lo']:.4f}, {rep['hi']:.4f}] n={rep['trials']}", file=out)
    if doc["exponent"]:
        e = doc["exponent"]
        print(f"exponent: median={e['median_slope']} p90={e['p90_slope']} entered={e['entered_fraction']:.3f}",
              file=out)
    for e in doc["expectations"]:
        print(f"expect {e['check']}: {'PASS' if e['passed'] else 'FAIL'}", file=out)


def _apply_seed(config: ExperimentConfig, seed: Optional[int]) -> ExperimentConfig:
    if seed is None:
        return config
    data = config.model_dump(mode="json")
    if data.get("ensemble"):
        data["ensemble"]["seed"] = seed
    if data["estimators"].get("martingale"):
        data["estimators"]["martingale"]["seed"] = seed
    return parse_config(data)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdestab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-config", help="validate a config and print it with defaults resolved")
    p.add_argument("path")

    for name, help_text in (("run", "run an experiment config"),
                            ("langevin-demo", "reproduce the Langevin example")):
        p = sub.add_parser(name, help=help_text)
        if name == "run":
            p.add_argument("path")
        else:
            p.add_argument("--alpha", type=float)
            p.add_argument("--beta", type=float)
        p.add_argument("--out-dir")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.command == "check-config":
            config = load_config(args.path)
            print(_dumps(config.model_dump(mode="json")), end="")
            return EXIT_OK
        if args.command == "run":
            config = _apply_seed(load_config(args.path), args.seed)
        else:
            config = langevin_demo_config(args.alpha, args.beta, args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1", [("--threads", "must be >= 1")])
        summary = run(config, args.out_dir, threads=args.threads)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    except PhaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _print_summary(summary)
    log.info("wrote %d files to %s", len(summary.files), args.out_dir or config.output_dir)
    return summary.exit_status


if __name__ == "__main__":
    sys.exit(main())
