"""Acceptance suite run by ``qlaplab verify-all``.

Every check returns a result dict::

    {"check": name, "index": k, "success": bool, "message": str,
     "exit_code": 2 + k, "details": {...}}

and the process exit code is the code of the first failed check.
"""
import json
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .asymptotics import (
    DEFAULT_TOLERANCES as FIT_TOLERANCES, evaluation_grid, expansion_check,
)
from .base import EXIT_FIRST_CHECK, EXIT_OK, QlapError
from .config import RunConfig
from .geometry import DictionaryFunction, KahlerStructure
from .qlaplacian import (
    balanced_identity_check, kernel_dimension, qlap_apply_toeplitz,
    qlap_assemble_projective, route_defect, spectrum, trace_formula,
)
from .quadrature import l2_inner
from .quantization import adjoint_symbol, bergman_rho, hs_inner, toeplitz
from .sections import fs_gram_diagonal, gram, prepare_level
from .types import ExpansionCheck, GridFunction, VmOperator

logger = logging.getLogger(__name__)

GRAM_LEVELS = (1, 4, 8, 16, 32)
BERGMAN_LEVELS = (1, 8, 16, 32, 64)
ADJOINT_LEVELS = (4, 8, 16)
TOEPLITZ_LEVELS = (4, 8, 16, 32)
BALANCED_LEVELS = (4, 8, 16)
ADJOINT_SAMPLES = 20
ROUTE_SAMPLES = 10


def _result(name: str, index: int, success: bool, message: str, **details) -> Dict[str, Any]:
    return {
        "check": name,
        "index": index,
        "success": bool(success),
        "message": message,
        "exit_code": EXIT_OK if success else EXIT_FIRST_CHECK + index - 1,
        "details": details,
    }


class AcceptanceSuite:
    """The thirteen numbered acceptance checks for one configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.fs = KahlerStructure.fubini_study()
        self.reference = cfg.reference_kahler()
        self.u1 = DictionaryFunction.parse("u1")
        self._expansions: Dict[str, ExpansionCheck] = {}
        self._levels: Dict[tuple, Any] = {}
        self.checks: List[Callable[[], Dict[str, Any]]] = [
            self.check_gram_oracle,
            self.check_balanced_bergman,
            self.check_adjointness,
            self.check_toeplitz_oracle,
            self.check_kernel,
            self.check_trace,
            self.check_route_equivalence,
            self.check_balanced_identity,
            self.check_p0,
            self.check_p1,
            self.check_a1,
            self.check_order_gates,
            self.check_determinism,
        ]

    @property
    def geometries(self) -> List[KahlerStructure]:
        out = [self.fs, self.reference]
        K = self.cfg.kahler()
        if K.spec not in {k.spec for k in out}:
            out.append(K)
        return out

    @property
    def small_levels(self) -> List[int]:
        """Levels for the dense checks: 2..max(2, m), within the dense cap."""
        top = max(2, self.cfg.m)
        return [m for m in range(2, top + 1) if (m + 1) ** 2 <= self.cfg.dense_cap]

    def rng(self, index: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, index])

    def _level(self, K: KahlerStructure, m: int, workers: Optional[int] = None):
        workers = workers or self.cfg.workers
        key = (K.spec, m, workers)
        if key not in self._levels:
            self._levels[key] = prepare_level(K, m, self.cfg.ns, self.cfg.ntheta, workers)
        return self._levels[key]

    def _expansion(self, key: str) -> ExpansionCheck:
        if key not in self._expansions:
            K, target = {
                "p0": (self.reference, "qlap"),
                "p1": (self.fs, "qlap"),
                "a1": (self.reference, "rho"),
            }[key]
            f = None if target == "rho" else self.u1
            self._expansions[key] = expansion_check(
                K, target, f, self.cfg.m_list, holdout=self.cfg.holdout,
                ns=self.cfg.ns, ntheta=self.cfg.ntheta, workers=self.cfg.workers,
                grid=evaluation_grid(self.cfg.eval_ns, self.cfg.eval_ntheta),
                tolerances=FIT_TOLERANCES[target],
            )
        return self._expansions[key]

    # 1
    def check_gram_oracle(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("gram")
        worst = {}
        for m in GRAM_LEVELS:
            G = gram(self.fs, m, workers=self.cfg.workers).entries
            d = fs_gram_diagonal(m)
            norm = np.sqrt(np.outer(d, d))
            worst[m] = float(np.max(np.abs(G - np.diag(d)) / norm))
        err = max(worst.values())
        return _result("gram_oracle", 1, err <= tol,
                       f"FS Gram relative error {err:.2e} (tol {tol:.0e})", errors=worst)

    # 2
    def check_balanced_bergman(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("bergman")
        worst = {}
        for m in BERGMAN_LEVELS:
            rho = bergman_rho(self._level(self.fs, m))
            worst[m] = float(np.max(np.abs(rho.values - (m + 1))))
        err = max(worst.values())
        return _result("balanced_bergman", 2, err <= tol,
                       f"FS rho_m deviation from m+1: {err:.2e} (tol {tol:.0e})", errors=worst)

    # 3
    def check_adjointness(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("adjoint")
        rng = self.rng(3)
        worst = {}
        for K in self.geometries:
            for m in ADJOINT_LEVELS:
                level = self._level(K, m)
                err = 0.0
                for _ in range(ADJOINT_SAMPLES):
                    f = GridFunction(level.grid, rng.standard_normal(level.grid.shape)
                                     + 1j * rng.standard_normal(level.grid.shape))
                    A = VmOperator.random(m, rng)
                    lhs = hs_inner(toeplitz(level, f), A)
                    rhs = l2_inner(K, f, adjoint_symbol(level, A))
                    scale = max(1.0, f.sup_norm() * float(np.linalg.norm(A.matrix)) * level.dim)
                    err = max(err, abs(lhs - rhs) / scale)
                worst[f"{K.spec}@{m}"] = err
        err = max(worst.values())
        return _result("adjointness", 3, err <= tol,
                       f"<T f, A> - <f, T* A> scaled error {err:.2e} (tol {tol:.0e})", errors=worst)

    # 4
    def check_toeplitz_oracle(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("toeplitz")
        worst = {}
        for m in TOEPLITZ_LEVELS:
            T = toeplitz(self._level(self.fs, m), self.u1).matrix
            k = np.arange(m + 1)
            worst[m] = float(np.max(np.abs(T - np.diag((m - 2 * k) / (m + 2)))))
        err = max(worst.values())
        return _result("toeplitz_oracle", 4, err <= tol,
                       f"T_m(u1) vs diag((m-2k)/(m+2)): {err:.2e} (tol {tol:.0e})", errors=worst)

    def _dense(self, K: KahlerStructure, m: int):
        return qlap_assemble_projective(self._level(K, m), self.cfg.dense_cap)

    # 5
    def check_kernel(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("kernel")
        dims, failures = {}, []
        for K in self.geometries:
            for m in self.small_levels:
                eigs = spectrum(self._dense(K, m), self.cfg.tolerance("hermitian"))
                dim = kernel_dimension(eigs, tol)
                scale = float(np.max(np.abs(eigs)))
                positive = bool(np.all(eigs[1:] > tol * scale))
                dims[f"{K.spec}@{m}"] = dim
                if dim != 1 or not positive:
                    failures.append(f"{K.spec}@{m}")
        ok = not failures
        message = "kernel is the scalars at every level" if ok else f"kernel check failed at {failures}"
        return _result("kernel", 5, ok, message, kernel_dims=dims)

    # 6
    def check_trace(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("trace")
        worst = {}
        for K in self.geometries:
            for m in self.small_levels:
                level = self._level(K, m)
                expected = trace_formula(level)
                tr = qlap_assemble_projective(level, self.cfg.dense_cap).trace()
                worst[f"{K.spec}@{m}"] = abs(tr - expected) / expected
        err = max(worst.values())
        return _result("trace", 6, err <= tol,
                       f"tr Delta_m relative to 2 pi m Vol: {err:.2e} (tol {tol:.0e})", errors=worst)

    # 7
    def check_route_equivalence(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("route")
        rng = self.rng(7)
        worst = {}
        for K in self.geometries:
            for m in self.small_levels:
                level = self._level(K, m)
                Q = qlap_assemble_projective(level, self.cfg.dense_cap)
                worst[f"{K.spec}@{m}"] = max(
                    route_defect(Q, level, VmOperator.random(m, rng)) for _ in range(ROUTE_SAMPLES)
                )
        err = max(worst.values())
        return _result("route_equivalence", 7, err <= tol,
                       f"dense vs Toeplitz route: {err:.2e} (tol {tol:.0e})", errors=worst)

    # 8
    def check_balanced_identity(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("balanced")
        rng = self.rng(8)
        worst = {}
        for m in BALANCED_LEVELS:
            level = self._level(self.fs, m)
            _, _, defect = balanced_identity_check(level, VmOperator.random(m, rng))
            worst[m] = defect
        err = max(worst.values())
        return _result("balanced_identity", 8, err <= tol,
                       f"Delta_m vs (m+1)^-2 T Delta T*: {err:.2e} (tol {tol:.0e})", errors=worst)

    # 9
    def check_p0(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("p0")
        check = self._expansion("p0")
        err = check.errors[0]
        return _result("p0", 9, err <= tol,
                       f"P_0(u1) on {self.reference.spec} vs Delta u1: {err:.2%} (tol {tol:.0%})",
                       fit=check.to_dict())

    # 10
    def check_p1(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("p1")
        check = self._expansion("p1")
        err = check.errors[1]
        return _result("p1", 10, err <= tol,
                       f"P_1(u1) at FS vs -16 pi u1: {err:.2%} (tol {tol:.0%})",
                       fit=check.to_dict())

    # 11
    def check_a1(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("a1")
        check = self._expansion("a1")
        err = check.errors[1]
        return _result("a1", 11, err <= tol,
                       f"a_1 on {self.reference.spec} vs scal/8pi: {err:.2%} (tol {tol:.0%})",
                       fit=check.to_dict())

    # 12
    def check_order_gates(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("slope")
        slopes, failures = {}, []
        for key in ("p0", "p1", "a1"):
            fit = self._expansion(key).fit
            slopes[key] = {"observed": fit.observed_slope, "predicted": fit.predicted_slope}
            if fit.observed_slope is not None and abs(fit.observed_slope - fit.predicted_slope) > tol:
                failures.append(key)
        ok = not failures
        message = "truncation errors decay at the predicted rate" if ok else f"order gate failed for {failures}"
        return _result("order_gates", 12, ok, message, slopes=slopes)

    def fingerprint(self, workers: int) -> Dict[str, Any]:
        """Numbers that must not depend on repetition or worker count."""
        m = min(self.small_levels[-1], 4)
        level = self._level(self.reference, m, workers)
        A = VmOperator.random(m, self.rng(13))
        return {
            "gram": level.gram.entries,
            "rho": bergman_rho(level).values,
            "toeplitz": toeplitz(level, self.u1).matrix,
            "apply": qlap_apply_toeplitz(level, A).matrix,
            "dense": qlap_assemble_projective(level, self.cfg.dense_cap).matrix,
        }

    # 13
    def check_determinism(self) -> Dict[str, Any]:
        tol = self.cfg.tolerance("determinism")
        first = self.fingerprint(1)
        again = self.fingerprint(1)
        threaded = self.fingerprint(max(2, self.cfg.workers))
        identical = all(np.array_equal(first[k], again[k]) for k in first)
        worst = {}
        for k in first:
            scale = max(float(np.max(np.abs(first[k]))), 1e-300)
            worst[k] = float(np.max(np.abs(first[k] - threaded[k]))) / scale
        err = max(worst.values())
        ok = identical and err <= tol
        return _result("determinism", 13, ok,
                       f"repeat identical: {identical}; worker variation {err:.2e} (tol {tol:.0e})",
                       worker_variation=worst)

    def run(self, only: Optional[Sequence[int]] = None) -> List[Dict[str, Any]]:
        """Run the checks (all, or the 1-based indices in ``only``) in order."""
        results = []
        for index, check in enumerate(self.checks, start=1):
            if only and index not in only:
                continue
            try:
                result = check()
            except QlapError as e:
                logger.error(f"Check {index} raised {type(e).__name__}: {e}")
                result = _result(check.__name__[len("check_"):], index, False,
                                 f"{type(e).__name__}: {e}", error=type(e).__name__)
            level = logging.INFO if result["success"] else logging.WARNING
            logger.log(level, f"[{index:2d}] {result['check']}: {result['message']}")
            results.append(result)
        return results


def exit_code(results: Sequence[Dict[str, Any]]) -> int:
    """Code of the first failed check, 0 when all pass."""
    for result in results:
        if not result["success"]:
            return result["exit_code"]
    return EXIT_OK


def summary(results: Sequence[Dict[str, Any]]) -> str:
    passed = sum(r["success"] for r in results)
    return json.dumps({"passed": passed, "total": len(results),
                       "exit_code": exit_code(results)}, sort_keys=True)
