"""Command-line front end: certify, solve, reachset, counterexample, gamma.

Every subcommand reads one YAML config (--config), draws all randomness from
explicit seeds and writes machine-readable CSV/JSON into the output directory
(--out, overridden by the MILDSOLVE_OUT environment variable).  Outputs are
byte-identical across re-runs except for the timestamp inside the metadata
key.  Exit codes: 0 success, 2 config error, 3 numeric/certification
failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .controls import control_from_csv, control_to_csv, lp_norm, sample_ball
from .operator import (
    ContractionCertificate,
    certify_hidden_contraction,
    certify_omega_contraction,
)
from .reachset import (
    VerificationError,
    compactness_diagnostic,
    convolution_compactness_check,
    counterexample_report,
    field_value_cloud,
    gamma_approximation,
    sample_reachset,
)
from .solver import CertificateRadiusError, picard_solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VERIFY = 4


def _metadata(cfg: RunConfig | None) -> dict:
    meta = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")}
    if cfg is not None:
        meta.update(cfg.to_metadata())
    return meta


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: list, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def build_certificate(cfg: RunConfig) -> ContractionCertificate:
    """Certificate for the configured system and control ball.

    p = 1 forces the hidden route; p > 1 defaults to the omega route with a
    hidden fallback (L^1 mass coarsened through the Hoelder bound
    |u|_1 <= T^{1/q} |u|_p) if the weighted-norm search overflows.
    """
    sg = cfg.build_semigroup()
    fields = cfg.build_fields(sg.dim)
    l_bound = max(f.lipschitz_L for f in fields)
    p, r, t_end = cfg.p, cfg.radius, cfg.horizon_T
    mode = cfg.solver.get("certificate_mode", "auto")
    target = float(cfg.solver.get("target_rate", 0.5))

    def hidden() -> ContractionCertificate:
        if p == 1:
            return certify_hidden_contraction(r, sg.class_M, sg.class_mu,
                                              l_bound, t_end, p=p)
        q = p / (p - 1.0) if not np.isinf(p) else 1.0
        return certify_hidden_contraction(r, sg.class_M, sg.class_mu, l_bound,
                                          t_end, p=p,
                                          l1_bound=r * t_end ** (1.0 / q))

    if mode == "hidden" or (mode == "auto" and p == 1):
        return hidden()
    if mode == "omega" and p == 1:
        raise ConfigError("omega certificates require p > 1")
    try:
        return certify_omega_contraction(p, r, sg.class_M, sg.class_mu,
                                         l_bound, t_end, target_C=target)
    except (OverflowError, FloatingPointError):
        return hidden()


def cmd_certify(cfg: RunConfig, out_dir: Path, args) -> int:
    cert = build_certificate(cfg)
    payload = {"certificate": cert.to_dict(), "metadata": _metadata(cfg)}
    _write_json(out_dir / "certificate.json", payload)
    print(f"wrote {out_dir / 'certificate.json'} "
          f"(mode={cert.mode}, rate={cert.rate_C:.6g})")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, out_dir: Path, args) -> int:
    sg = cfg.build_semigroup()
    fields = cfg.build_fields(sg.dim)
    xi0 = cfg.build_xi0(sg.dim)
    cert = build_certificate(cfg)

    if args.control is not None:
        u = control_from_csv(args.control, horizon_T=cfg.horizon_T)
    else:
        u = sample_ball(cfg.p, cfg.radius, cfg.horizon_T, len(fields),
                        cfg.n_t, 1, args.seed if args.seed is not None else cfg.seed)[0]
    norm_u = lp_norm(u, cert.p)
    if norm_u > cert.radius_r * (1.0 + 1e-12):
        raise ConfigError(
            f"control norm {norm_u:.6g} exceeds certificate radius {cert.radius_r:.6g}")

    result = picard_solve(xi0, u, fields, sg, cert, tol=cfg.tol)
    traj = result.trajectory
    rows = [[repr(float(t))] + [repr(float(v)) for v in state]
            for t, state in zip(traj.times, traj.states)]
    _write_csv(out_dir / "trajectory.csv",
               ["t"] + [f"x{i}" for i in range(traj.dim)], rows)
    control_to_csv(u, out_dir / "control.csv")
    _write_json(out_dir / "solve.json", {
        "iterations": result.iterations,
        "iterate_gaps": result.iterate_gaps,
        "a_posteriori_bound": result.a_posteriori_bound,
        "certificate": cert.to_dict(),
        "control_lp_norm": norm_u,
        "metadata": _metadata(cfg),
    })
    print(f"solved in {result.iterations} applications "
          f"(bound {result.a_posteriori_bound:.3e}); wrote {out_dir}")
    return EXIT_OK


def cmd_reachset(cfg: RunConfig, out_dir: Path, args) -> int:
    diag = cfg.diagnostic
    report = compactness_diagnostic(
        dims=diag.get("dims", [16, 32, 64]),
        eps_ladder=diag.get("eps_ladder", [0.1, 0.05, 0.02]),
        p=cfg.p, r=cfg.radius, T=cfg.horizon_T,
        count=cfg.count,
        seed=args.seed if args.seed is not None else cfg.seed,
        n_t=int(diag.get("n_t", cfg.n_t)),
        xi0_scale=float(diag.get("xi0_scale", 0.02)),
        cloud_budget=int(diag.get("cloud_budget", 4000)),
        tol=float(diag.get("tol", 1e-4)),
        threads=args.threads,
    )
    _write_csv(out_dir / "diagnostic.csv",
               ["n", "p", "eps", "n_reach", "n_ball", "sample_size"],
               [[row["n"], row["p"], repr(row["eps"]), row["n_reach"],
                 row["n_ball"], row["sample_size"]] for row in report.rows])
    _write_json(out_dir / "reachset.json",
                {"rows": report.rows, "diagnostic_config": report.config,
                 "metadata": _metadata(cfg)})
    print(f"wrote {out_dir / 'diagnostic.csv'} ({len(report.rows)} rows)")
    return EXIT_OK


def cmd_counterexample(cfg: RunConfig, out_dir: Path, args) -> int:
    block = cfg.counterexample
    report = counterexample_report(
        n_max=int(block.get("n_max", 128)),
        n_t=int(block.get("n_t", 1024)),
        separation=float(block.get("separation", 0.5)),
        eval_eps=float(block.get("eval_eps", 0.25)),
    )
    _write_json(out_dir / "counterexample.json", {
        "spike_indices": report.spike_indices,
        "max_closed_form_error": report.max_closed_form_error,
        "packing": {"separation": report.packing_separation,
                    "size": report.packing_size},
        "evaluation_covering": {"eps": report.eval_epsilon,
                                "size": report.eval_covering_size},
        "metadata": _metadata(cfg),
    })
    print(f"spike family {report.spike_indices}: packing {report.packing_size}, "
          f"evaluation covering {report.eval_covering_size}")
    return EXIT_OK


def cmd_gamma(cfg: RunConfig, out_dir: Path, args) -> int:
    sg = cfg.build_semigroup()
    fields = cfg.build_fields(sg.dim)
    xi0 = cfg.build_xi0(sg.dim)
    cert = build_certificate(cfg)
    seed = args.seed if args.seed is not None else cfg.seed
    sample = sample_reachset(xi0, cfg.p, cfg.radius, cfg.horizon_T, cfg.count,
                             seed, fields, sg, cert, cfg.n_t, tol=cfg.tol,
                             threads=args.threads)
    cloud = field_value_cloud(sample, fields)
    eps = float(cfg.gamma.get("eps", 0.1))
    lag_grid = np.linspace(0.0, cfg.horizon_T, cfg.n_t + 1)
    table = gamma_approximation(sg, cloud, cfg.horizon_T, eps, seed=seed,
                                extra_verify_times=lag_grid)
    _write_json(out_dir / "gamma.json",
                {"table": table.to_dict(), "metadata": _metadata(cfg)})

    verification = {
        "eps": eps,
        "delta": table.delta,
        "max_error": table.verified_max_error,
        "points_checked": table.verification_points,
        "passed": bool(table.verified_max_error < eps),
    }
    if cfg.gamma.get("run_convolution_check", True):
        half = gamma_approximation(sg, cloud, cfg.horizon_T, eps / 2.0,
                                   seed=seed, extra_verify_times=lag_grid)
        conv = convolution_compactness_check(
            sample, half, fields, sg,
            max_controls=int(cfg.gamma.get("max_controls", 20)))
        verification["convolution"] = {
            "n_controls": conv.n_controls,
            "max_coefficient": conv.max_coefficient,
            "max_reconstruction_error": conv.max_reconstruction_error,
            "tolerance": eps / 2.0 + 10.0 / cfg.n_t,
            "passed": bool(conv.max_reconstruction_error < eps / 2.0 + 10.0 / cfg.n_t),
        }
        if not verification["convolution"]["passed"]:
            raise VerificationError(
                f"convolution reconstruction error {conv.max_reconstruction_error:.3e} "
                f"exceeds {eps / 2.0 + 10.0 / cfg.n_t:.3e}")
    _write_json(out_dir / "gamma_verification.json",
                {"verification": verification, "metadata": _metadata(cfg)})
    print(f"Gamma table: {table.n_time_cells} x {table.n_state_cells} cells, "
          f"max error {table.verified_max_error:.3e} < {eps}")
    return EXIT_OK


_COMMANDS = {
    "certify": cmd_certify,
    "solve": cmd_solve,
    "reachset": cmd_reachset,
    "counterexample": cmd_counterexample,
    "gamma": cmd_gamma,
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mildsolve",
        description="Certified Picard solver and reachable-set compactness diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("certify", "emit the contraction certificate for the configured ball"),
        ("solve", "solve one control and write trajectory CSV + JSON sidecar"),
        ("reachset", "run the covering-number diagnostic across dimensions"),
        ("counterexample", "run the dyadic spike family report"),
        ("gamma", "build and verify the finite-image semigroup table"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="YAML run configuration")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override control.seed from the config")
        cmd.add_argument("--threads", type=int, default=None,
                         help="cap worker threads (default: available cores)")
        cmd.add_argument("--out", default="out", help="output directory")
        if name == "solve":
            cmd.add_argument("--control", default=None,
                             help="CSV control file (default: sample one from the ball)")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out_dir = Path(os.environ.get("MILDSOLVE_OUT", args.out))
    try:
        cfg = RunConfig.from_file(args.config)
        return _COMMANDS[args.command](cfg, out_dir, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VerificationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (CertificateRadiusError, OverflowError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
