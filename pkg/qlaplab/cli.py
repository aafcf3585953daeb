"""Command-line front end: ``qlaplab <command> [options]``.

Commands write JSON reports and CSV tables into the output directory and
print a one-line JSON summary. Exit codes: 0 success, 1 internal error,
2 configuration error, 3.. numbered acceptance failures.
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .asymptotics import coefficient_columns, evaluation_grid, expansion_check
from .base import EXIT_CONFIG, EXIT_INTERNAL, EXIT_OK, ConfigError, DenseCapError, QlapError
from .config import TARGETS, RunConfig, parse_config, parse_m_list
from .qlaplacian import (
    balanced_identity_check, induced_metric, kernel_dimension,
    qlap_assemble_projective, route_defect, spectrum, trace_formula,
)
from .quadrature import integrate
from .quantization import adjoint_injectivity, bergman_rho, toeplitz
from .sections import Level, fs_gram_diagonal, prepare_level
from .storage import ArtifactStore, report_envelope
from .types import VmOperator
from .verify import AcceptanceSuite, exit_code

logger = logging.getLogger(__name__)

COMMANDS = ("gram", "bergman", "toeplitz", "qlap", "expansion", "verify-all")
ROUTE_SAMPLES = 10


def _m_list_arg(text: str) -> Tuple[int, ...]:
    try:
        return parse_m_list(text)
    except ConfigError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--geom", help="Geometry: fs or fs+<eps>*<dict-expr>")
    common.add_argument("--m", type=int, help="Quantization level")
    common.add_argument("--m-list", type=_m_list_arg, help="Comma-separated level ladder")
    common.add_argument("--holdout", type=int, help="Held-out level for order gates")
    common.add_argument("--ns", type=int, help="Radial quadrature nodes (default 2m+16)")
    common.add_argument("--ntheta", type=int, help="Azimuthal quadrature nodes (default 4m+16)")
    common.add_argument("--dense-cap", type=int, help="Largest (m+1)^2 for dense assembly")
    common.add_argument("--seed", type=int, help="Seed for random operators")
    common.add_argument("--workers", type=int, help="Assembly worker threads")
    common.add_argument("--output-dir", help="Artifact directory (env QLAPLAB_OUTPUT_DIR)")
    common.add_argument("--formats", help="Comma-separated subset of csv,json")
    common.add_argument("--config", help="JSON config file (env QLAPLAB_CONFIG)")
    common.add_argument("--tol", action="append", metavar="NAME=VALUE",
                        help="Tolerance override, repeatable")
    common.add_argument("--f", help="Dictionary function, e.g. u1 or u1*u2")
    common.add_argument("--dump-gram", action="store_true", help="Write Gram and basis-change CSVs")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings only")

    parser = argparse.ArgumentParser(
        prog="qlaplab",
        description="Numerical laboratory for the quantized Laplacian on CP^1",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("gram", parents=[common], help="Gram matrix of the monomials")
    subparsers.add_parser("bergman", parents=[common], help="Density of states rho_m")
    subparsers.add_parser("toeplitz", parents=[common], help="Toeplitz matrix T_m(f)")
    qlap = subparsers.add_parser("qlap", parents=[common], help="Quantized Laplacian Delta_m")
    qlap.add_argument("--dense", action="store_true", help="Assemble Delta_m densely")
    qlap.add_argument("--check-balanced", action="store_true", help="Measure the balanced identity")
    qlap.add_argument("--spectrum", action="store_true", help="Eigenvalues (implies --dense)")
    expansion = subparsers.add_parser("expansion", parents=[common], help="Large-m coefficient fits")
    expansion.add_argument("--target", choices=TARGETS, help="Expansion family")
    subparsers.add_parser("verify-all", parents=[common], help="Run the acceptance suite")
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=logging.INFO)
    if getattr(args, "verbose", False):
        root.setLevel(logging.DEBUG)
    elif getattr(args, "quiet", False):
        root.setLevel(logging.WARNING)


class Runner:
    """Executes one command against a resolved RunConfig."""

    def __init__(self, cfg: RunConfig, args: Optional[argparse.Namespace] = None):
        self.cfg = cfg
        self.args = args or argparse.Namespace()
        self.K = cfg.kahler()
        self.store = ArtifactStore(cfg.output_dir, cfg.formats)

    def flag(self, name: str) -> bool:
        return bool(getattr(self.args, name, False))

    def envelope(self, command: str, grid: Any) -> Dict[str, Any]:
        return report_envelope(command, self.K.spec, grid, self.cfg.seed, self.cfg.canonical())

    def level(self, m: Optional[int] = None) -> Level:
        return prepare_level(self.K, m or self.cfg.m, self.cfg.ns, self.cfg.ntheta, self.cfg.workers)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.cfg.seed)

    def run(self, command: str) -> Dict[str, Any]:
        self.store.initialize()
        try:
            handler = getattr(self, "cmd_" + command.replace("-", "_"))
            return handler()
        finally:
            self.store.cleanup()

    def cmd_gram(self) -> Dict[str, Any]:
        level = self.level()
        G = level.gram.entries
        report = self.envelope("gram", level.grid.to_dict())
        report.update({
            "m": level.m,
            "gram": level.gram.to_dict(),
            "adjoint_injectivity": adjoint_injectivity(level),
            "success": True,
        })
        if self.K.is_fubini_study:
            d = fs_gram_diagonal(level.m)
            report["fs_relative_error"] = float(np.max(np.abs(G - np.diag(d)) / np.sqrt(np.outer(d, d))))
        if self.cfg.dump_gram:
            j, k = np.indices(G.shape)
            self.store.write_table("gram", {"j": j.reshape(-1), "k": k.reshape(-1),
                                            "entry": G.reshape(-1)})
            B = level.table.basis_change
            self.store.write_table("basis_change", {"j": j.reshape(-1), "a": k.reshape(-1),
                                                    "entry": B.reshape(-1)})
        self.store.write_report("gram", report)
        return report

    def cmd_bergman(self) -> Dict[str, Any]:
        level = self.level()
        rho = bergman_rho(level)
        values = rho.values.real
        grid = level.grid
        s, theta = np.meshgrid(grid.s, grid.theta, indexing="ij")
        self.store.write_table("bergman", {
            "node": np.arange(grid.size), "s": s.reshape(-1),
            "theta": theta.reshape(-1), "rho": values.reshape(-1),
        })
        report = self.envelope("bergman", grid.to_dict())
        report.update({
            "m": level.m,
            "rho_min": float(values.min()),
            "rho_max": float(values.max()),
            "integral": float(integrate(self.K, rho).real),
            "max_deviation_from_dim": float(np.max(np.abs(values - level.dim))),
            "success": True,
        })
        self.store.write_report("bergman", report)
        return report

    def cmd_toeplitz(self) -> Dict[str, Any]:
        level = self.level()
        f = self.cfg.function()
        T, defect = toeplitz(level, f, return_defect=True)
        a, b = np.indices(T.matrix.shape)
        self.store.write_table("toeplitz", {"row": a.reshape(-1), "col": b.reshape(-1),
                                            "entry": T.matrix.reshape(-1)})
        report = self.envelope("toeplitz", level.grid.to_dict())
        report.update({
            "m": level.m,
            "f": f.expression,
            "symmetrization_defect": defect,
            "trace": complex(np.trace(T.matrix)),
            "operator_norm": T.norm(),
            "success": True,
        })
        self.store.write_report("toeplitz", report)
        return report

    def cmd_qlap(self) -> Dict[str, Any]:
        level = self.level()
        metric = induced_metric(level)
        rng = self.rng()
        report = self.envelope("qlap", level.grid.to_dict())
        report.update({
            "m": level.m,
            "trace_formula": trace_formula(level),
            "induced_mass": metric.total_mass(),
            "trace": None,
            "kernel_dim": None,
            "route_defect": None,
            "balanced_defect": None,
        })
        dense = self.flag("dense") or self.flag("spectrum")
        if dense:
            Q = qlap_assemble_projective(level, self.cfg.dense_cap)
            report["trace"] = Q.trace()
            report["route_defect"] = max(
                route_defect(Q, level, VmOperator.random(level.m, rng)) for _ in range(ROUTE_SAMPLES)
            )
            if self.flag("spectrum"):
                eigs = spectrum(Q, self.cfg.tolerance("hermitian"))
                report["eigenvalues"] = eigs
                report["kernel_dim"] = kernel_dimension(eigs, self.cfg.tolerance("kernel"))
                self.store.write_table("qlap_spectrum", {"index": np.arange(eigs.size),
                                                         "eigenvalue": eigs})
        if self.flag("check_balanced"):
            _, _, defect = balanced_identity_check(level, VmOperator.random(level.m, rng))
            report["balanced_defect"] = defect
        report["success"] = True
        self.store.write_report("qlap", report)
        return report

    def cmd_expansion(self) -> Dict[str, Any]:
        target = self.cfg.target
        f = None if target == "rho" else self.cfg.function()
        grid = evaluation_grid(self.cfg.eval_ns, self.cfg.eval_ntheta)
        check = expansion_check(
            self.K, target, f, self.cfg.m_list, holdout=self.cfg.holdout,
            ns=self.cfg.ns, ntheta=self.cfg.ntheta, workers=self.cfg.workers, grid=grid,
        )
        name = f"expansion_{target}"
        self.store.write_table(name, coefficient_columns(check))
        report = self.envelope("expansion", grid.to_dict())
        report.update({
            "target": target,
            "f": f.expression if f else None,
            "m_values": list(self.cfg.m_list),
            "holdout": self.cfg.holdout,
            **check.to_dict(),
        })
        self.store.write_report(name, report)
        return report

    def cmd_verify_all(self) -> Dict[str, Any]:
        suite = AcceptanceSuite(self.cfg)
        results = suite.run()
        code = exit_code(results)
        report = self.envelope("verify-all", {"policy": "auto" if self.cfg.ns is None else "fixed"})
        report.update({
            "results": results,
            "success": code == EXIT_OK,
            "exit_code": code,
        })
        self.store.write_report("verify_all", report)
        return report


def run_suite(cfg: RunConfig, command: str = "verify-all",
              args: Optional[argparse.Namespace] = None) -> int:
    """Run one command; returns the process exit code."""
    if command not in COMMANDS:
        raise ConfigError(f"Unknown command {command!r}; use one of {COMMANDS}")
    report = Runner(cfg, args).run(command)
    code = report.get("exit_code", EXIT_OK if report.get("success", True) else EXIT_INTERNAL)
    summary = {"command": command, "exit_code": code, "output_dir": cfg.output_dir}
    print(json.dumps(summary, sort_keys=True))
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags and 0 on --help
        return EXIT_CONFIG if e.code else EXIT_OK
    _configure_logging(args)
    try:
        cfg = parse_config(args)
        return run_suite(cfg, args.command, args)
    except (ConfigError, DenseCapError) as e:
        logger.error(f"Configuration error: {e}")
        print(json.dumps({"command": args.command, "exit_code": EXIT_CONFIG,
                          "message": str(e)}, sort_keys=True))
        return EXIT_CONFIG
    except QlapError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(json.dumps({"command": args.command, "exit_code": EXIT_INTERNAL,
                          "message": f"{type(e).__name__}: {e}"}, sort_keys=True))
        return EXIT_INTERNAL
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
