#!/usr/bin/env python3
"""
Command-line front end.

    python -m slope_recovery.src.main [--config config.json] <command> ...

Commands: solve, check, diagnose, path, experiment. Matrices are
headerless CSV (rows = observations), vectors single-column CSV; lines
starting with '#' are comments. Every output file starts with a run
manifest written as '#' lines.

Exit codes: 0 ok / recovered, 1 negative verdict, 2 input error,
3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from slope_recovery import __version__
from slope_recovery.config.config_loader import ConfigLoader
from slope_recovery.src.errors import (CalibrationFailed, InvalidVector,
                                       NotConverged, SlopeError)
from slope_recovery.src.experiments import ExperimentConfig, run_experiment
from slope_recovery.src.lambda_seq import LambdaRecipe
from slope_recovery.src.numerics import Tolerances, as_matrix, as_vector
from slope_recovery.src.pattern import SlopePattern, patt
from slope_recovery.src.recovery import (check_recovery, geometric_pi_bar,
                                         irrepresentability,
                                         open_irrepresentability,
                                         zero_pattern_recovered)
from slope_recovery.src.solver import (Problem, SolverOptions, is_orthogonal,
                                       locate_breakpoints, solution_path,
                                       solve, solve_lasso, solve_orthogonal)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

FLOAT_FORMAT = "%.17g"


def setup_logging(loader: ConfigLoader, verbose: bool = False) -> None:
    block = loader.get("logging", {})
    log_dir = Path(block.get("dir", "logs"))
    os.makedirs(log_dir, exist_ok=True)
    level = logging.DEBUG if verbose else getattr(logging, str(block.get("level", "INFO")).upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=[
            logging.FileHandler(log_dir / block.get("file", "slope_recovery.log")),
            logging.StreamHandler(sys.stderr),
        ],
    )


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    """Provenance written at the top of every output file."""

    command: str
    config: str
    seed: str
    version: str
    tolerances: Dict
    outputs: List[str] = field(default_factory=list)

    def header_lines(self) -> List[str]:
        return [
            f"# command: {self.command}",
            f"# config: {self.config}",
            f"# seed: {self.seed}",
            f"# version: {self.version}",
            f"# tolerances: {json.dumps(self.tolerances, sort_keys=True)}",
            f"# outputs: {', '.join(self.outputs)}",
        ]


def read_matrix(path: str) -> np.ndarray:
    frame = pd.read_csv(path, header=None, comment="#")
    return as_matrix(frame.to_numpy(dtype=float))


def read_vector(path: str, name: str) -> np.ndarray:
    frame = pd.read_csv(path, header=None, comment="#")
    if frame.shape[1] != 1:
        raise InvalidVector(f"{name} file {path} must have a single column, found {frame.shape[1]}")
    return as_vector(frame.to_numpy(dtype=float).ravel(), name)


def read_vector_arg(value: str, name: str) -> np.ndarray:
    """A vector given as a file or inline as comma-separated numbers."""
    if Path(value).is_file():
        return read_vector(value, name)
    if "," not in value and not _is_number(value):
        raise FileNotFoundError(f"{name} file not found: {value}")
    try:
        return as_vector([float(t) for t in value.split(",")], name)
    except ValueError as e:
        raise InvalidVector(f"cannot parse {name} {value!r}: {e}") from e


def read_pattern_arg(value: str) -> SlopePattern:
    if Path(value).is_file():
        lines = [ln.strip() for ln in Path(value).read_text().splitlines()]
        value = ",".join(ln for ln in lines if ln and not ln.startswith("#"))
    return SlopePattern.parse(value)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_table(frame: pd.DataFrame, path: Path, manifest: RunManifest, header: bool = True) -> None:
    with open(path, "w") as f:
        f.write("\n".join(manifest.header_lines()) + "\n")
        frame.to_csv(f, index=False, header=header, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {path}")


def write_lines(lines: List[str], path: Path, manifest: RunManifest) -> None:
    with open(path, "w") as f:
        f.write("\n".join(manifest.header_lines() + lines) + "\n")
    logger.info(f"Wrote {path}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

class CommandRunner:
    def __init__(self, args: argparse.Namespace, loader: ConfigLoader):
        self.args = args
        self.loader = loader
        self.tol: Tolerances = loader.get_tolerances()
        self.opts: SolverOptions = loader.get_solver_options()
        self.out_dir = Path(getattr(args, "out_dir", None) or ".")

    def manifest(self, outputs: List[str], seed="none", config: Optional[str] = None) -> RunManifest:
        return RunManifest(
            command=" ".join(self.args.raw_argv),
            config=config or str(self.loader.loaded_from or "defaults"),
            seed=str(seed),
            version=__version__,
            tolerances=self.tol.as_dict(),
            outputs=outputs,
        )

    def _data(self):
        X = read_matrix(self.args.X)
        Y = read_vector(self.args.Y, "Y")
        return X, Y

    def _tuning(self, p: int):
        return LambdaRecipe.parse(self.args.lambda_recipe, p).build()

    def cmd_solve(self) -> int:
        X, Y = self._data()
        alpha = self.args.alpha
        if self.args.lasso:
            result = solve_lasso(X, Y, alpha, self.opts, self.tol)
        else:
            tuning = self._tuning(X.shape[1])
            if is_orthogonal(X, self.tol):
                result = solve_orthogonal(X, Y, tuning.scaled(alpha), self.tol)
            else:
                result = solve(Problem(X, Y, tuning, alpha), self.opts, self.tol)

        self.out_dir.mkdir(parents=True, exist_ok=True)
        outputs = ["beta_hat.csv", "pattern.csv", "kkt.csv"]
        manifest = self.manifest(outputs)
        write_table(pd.DataFrame(result.beta_hat), self.out_dir / "beta_hat.csv", manifest, header=False)
        write_lines([str(result.pattern)], self.out_dir / "pattern.csv", manifest)
        write_table(pd.DataFrame([{
            "iterations": result.iterations,
            "kkt_residual": result.kkt_residual,
            "objective": result.objective,
            "converged": int(result.converged),
            "polished": int(result.polished),
        }]), self.out_dir / "kkt.csv", manifest)
        print(f"pattern: {result.pattern}")
        return EXIT_OK

    def cmd_check(self) -> int:
        X, Y = self._data()
        beta = read_vector_arg(self.args.beta, "beta")
        tuning = self._tuning(X.shape[1])
        M = patt(beta)
        if M.is_zero:
            ok = zero_pattern_recovered(X, Y, tuning, self.args.alpha, self.tol)
            record = {"pattern": str(M), "alpha": self.args.alpha, "recovered": int(ok)}
        else:
            record = check_recovery(X, Y, M, tuning, self.args.alpha, self.tol).to_record()
            ok = bool(record["recovered"])

        self.out_dir.mkdir(parents=True, exist_ok=True)
        write_table(pd.DataFrame([record]), self.out_dir / "certificate.csv", self.manifest(["certificate.csv"]))
        print(f"pattern {M}: {'recovered' if ok else 'not recovered'} at alpha={self.args.alpha:g}")
        return EXIT_OK if ok else EXIT_NEGATIVE

    def cmd_diagnose(self) -> int:
        X = read_matrix(self.args.X)
        M = read_pattern_arg(self.args.pattern)
        tuning = self._tuning(X.shape[1])
        ir = irrepresentability(X, M, tuning, self.tol)
        geometry = geometric_pi_bar(X, M, tuning, self.tol)
        report = {
            "pattern": str(M),
            "dual_value": ir.dual_value,
            "col_space": int(ir.col_ok),
            "irrepresentable": int(ir.holds),
            "open_irrepresentable": int(open_irrepresentability(X, M, tuning, self.tol)),
            "pi_bar_in_affine": int(geometry.in_affine),
            "pi_bar_in_colspace": int(geometry.in_colspace),
            "pi_bar_in_subdiff": int(geometry.in_subdiff),
        }
        for key, value in report.items():
            print(f"{key}: {value}")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        write_table(pd.DataFrame([report]), self.out_dir / "diagnose.csv", self.manifest(["diagnose.csv"]))
        return EXIT_OK if ir.holds else EXIT_NEGATIVE

    def cmd_path(self) -> int:
        X, Y = self._data()
        tuning = self._tuning(X.shape[1])
        alphas = parse_alpha_grid(self.args.alpha_grid)
        path = solution_path(X, Y, tuning, alphas, self.opts, self.tol)

        rows = []
        for point in path:
            row = {"alpha": point.alpha, "pattern": str(point.pattern), "objective": point.result.objective}
            row.update({f"beta_{i + 1}": b for i, b in enumerate(point.beta_hat)})
            rows.append(row)

        self.out_dir.mkdir(parents=True, exist_ok=True)
        outputs = ["path.csv"] + (["breakpoints.csv"] if self.args.breakpoints else [])
        manifest = self.manifest(outputs)
        write_table(pd.DataFrame(rows), self.out_dir / "path.csv", manifest)
        if self.args.breakpoints:
            found = locate_breakpoints(X, Y, tuning, path, self.opts, self.tol)
            table = pd.DataFrame(
                [{"alpha": bp.alpha, "pattern_before": str(bp.pattern_before),
                  "pattern_after": str(bp.pattern_after)} for bp in found],
                columns=["alpha", "pattern_before", "pattern_after"],
            )
            write_table(table, self.out_dir / "breakpoints.csv", manifest)
            for bp in found:
                print(f"alpha={bp.alpha:.4f}: {bp.pattern_before} -> {bp.pattern_after}")
        return EXIT_OK

    def cmd_experiment(self) -> int:
        with open(self.args.experiment_config, "r") as f:
            block = json.load(f)
        if self.args.reps is not None:
            block["reps"] = self.args.reps
        if self.args.seed is not None:
            block["master_seed"] = self.args.seed
        if self.args.workers is not None:
            block["workers"] = self.args.workers
        config = ExperimentConfig.from_dict(block, self.loader.get("experiments", {}))

        output = run_experiment(config, self.tol, self.opts, progress=not self.args.quiet)

        tables = {f"{config.name}_aggregate.csv": output.aggregate}
        if output.per_rep is not None:
            tables[f"{config.name}_per_rep.csv"] = output.per_rep
        for key, frame in output.extras.items():
            tables[f"{config.name}_{key}.csv"] = frame

        self.out_dir.mkdir(parents=True, exist_ok=True)
        manifest = self.manifest(list(tables), seed=config.master_seed, config=self.args.experiment_config)
        for filename, frame in tables.items():
            write_table(frame, self.out_dir / filename, manifest)
        print(output.aggregate.to_string(index=False))
        return EXIT_OK


def parse_alpha_grid(text: str) -> np.ndarray:
    """'lo:hi:n' for n evenly spaced values in [lo, hi]."""
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as e:
        raise InvalidVector(f"alpha grid must look like lo:hi:n, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="SLOPE pattern recovery toolkit")
    parser.add_argument("--config", type=str, default=None, help="Configuration file path (default: $SLOPE_CONFIG or config.json)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Verbose logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p, with_y=True):
        p.add_argument("--X", required=True, help="Design matrix CSV")
        if with_y:
            p.add_argument("--Y", required=True, help="Response vector CSV")
        p.add_argument("--lambda", dest="lambda_recipe", default="gauss-os",
                       help="gauss-os | oscar:a,b | const:l | file:<path> | explicit values")
        p.add_argument("--out-dir", type=str, default=".", help="Output directory")

    solve_p = sub.add_parser("solve", help="Fit SLOPE at penalty alpha*Lambda")
    data_args(solve_p)
    solve_p.add_argument("--alpha", type=float, required=True, help="Penalty scale")
    solve_p.add_argument("--lasso", action="store_true", help="Fit LASSO with penalty alpha*||b||_1")

    check_p = sub.add_parser("check", help="Certify pattern recovery at alpha")
    data_args(check_p)
    check_p.add_argument("--beta", required=True, help="True coefficient vector (file or inline)")
    check_p.add_argument("--alpha", type=float, required=True, help="Penalty scale")

    diag_p = sub.add_parser("diagnose", help="Irrepresentability diagnostics for a pattern")
    data_args(diag_p, with_y=False)
    diag_p.add_argument("--pattern", required=True, help="Pattern file or inline, e.g. 2,1")

    path_p = sub.add_parser("path", help="Solution path over an alpha grid")
    data_args(path_p)
    path_p.add_argument("--alpha-grid", required=True, help="lo:hi:n")
    path_p.add_argument("--breakpoints", action="store_true", help="Bisect pattern changes")

    exp_p = sub.add_parser("experiment", help="Run an experiment from a JSON config")
    exp_p.add_argument("--config", dest="experiment_config", required=True, help="Experiment config JSON")
    exp_p.add_argument("--out-dir", type=str, default="results", help="Output directory")
    exp_p.add_argument("--reps", type=int, help="Override replication count")
    exp_p.add_argument("--seed", type=int, help="Override master seed")
    exp_p.add_argument("--workers", type=int, help="Override worker threads")
    exp_p.add_argument("--quiet", action="store_true", help="No progress bar")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.raw_argv = argv

    loader = ConfigLoader(args.config)
    setup_logging(loader, args.verbose)

    runner = CommandRunner(args, loader)
    handler = getattr(runner, f"cmd_{args.command}")
    try:
        return handler()
    except (NotConverged, CalibrationFailed, np.linalg.LinAlgError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_NUMERICAL
    except (SlopeError, ValueError, OSError, KeyError) as e:
        logger.error(f"{args.command}: invalid input: {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
