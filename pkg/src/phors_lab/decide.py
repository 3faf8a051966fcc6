"""Top-level termination verdicts with machine-checkable certificates.

A verdict answers two questions about a compiled system: does the start
variable reach 1 at z = 1 (almost-sure termination), and is the
derivative of the start series at z = 1 finite (positive AST, i.e.
finite expected number of probabilistic choices).  Every yes/no answer
carries a certificate that `verify_certificate` re-checks by plain
polynomial arithmetic, independent of the solving code."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .algebra import Poly
from .interp import Fas, reachable, var_name, z_vid
from .solver import (
    DerivativeResult,
    Interval,
    MinSolution,
    SolveConfig,
    SolverError,
    Value,
    expected_steps,
    solve_at_one,
    value_hi,
)

ONE = Fraction(1)
ZERO = Fraction(0)


@dataclass
class FixpointAtOne:
    """v with P(v, 1) = v exactly and v_start = 1."""

    assignment: dict[int, Fraction]


@dataclass
class PreFixpointBelowOne:
    """v with P(v, 1) <= v componentwise and v_start < 1: by
    Knaster-Tarski the least fixpoint is below v, so AST fails."""

    assignment: dict[int, Fraction]


@dataclass
class CriticalJacobian:
    """Nonzero u with (I - J)u = 0 at (w*, 1): the linearized system is
    singular, so the expected choice count diverges."""

    order: list[int]
    kernel: list[Fraction]
    solution: dict[int, Fraction]


@dataclass
class NonsingularLinearSolve:
    """d with (I - J)d = g at (w*, 1): the expected choice count."""

    order: list[int]
    d_vector: dict[int, Fraction]
    solution: dict[int, Fraction]


Certificate = FixpointAtOne | PreFixpointBelowOne | CriticalJacobian | NonsingularLinearSolve


@dataclass
class Verdict:
    ast: str = "inconclusive"  # "yes" | "no" | "inconclusive"
    past: str = "inconclusive"
    p_term: Value | None = None
    expected: Fraction | float | Interval | None = None
    certificates: list[Certificate] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._check()

    def _check(self) -> None:
        if self.past == "yes" and self.ast != "yes":
            raise ValueError("PAST implies AST: inconsistent verdict")

    def to_jsonable(self) -> dict:
        def rat(x):
            if isinstance(x, Fraction):
                return f"{x.numerator}/{x.denominator}"
            return x

        def val(x):
            if x is None:
                return None
            if isinstance(x, Interval):
                return {"lo": rat(x.lo), "hi": rat(x.hi)}
            if x == math.inf:
                return "inf"
            return rat(x)

        certs = []
        for c in self.certificates:
            if isinstance(c, FixpointAtOne):
                certs.append(
                    {
                        "kind": "fixpoint-at-one",
                        "assignment": {
                            var_name(v): rat(x) for v, x in c.assignment.items()
                        },
                    }
                )
            elif isinstance(c, PreFixpointBelowOne):
                certs.append(
                    {
                        "kind": "pre-fixpoint-below-one",
                        "assignment": {
                            var_name(v): rat(x) for v, x in c.assignment.items()
                        },
                    }
                )
            elif isinstance(c, CriticalJacobian):
                certs.append(
                    {
                        "kind": "critical-jacobian",
                        "order": [var_name(v) for v in c.order],
                        "kernel": [rat(x) for x in c.kernel],
                    }
                )
            elif isinstance(c, NonsingularLinearSolve):
                certs.append(
                    {
                        "kind": "nonsingular-linear-solve",
                        "d": {var_name(v): rat(x) for v, x in c.d_vector.items()},
                    }
                )
        return {
            "ast": self.ast,
            "past": self.past,
            "p_term": val(self.p_term),
            "expected": val(self.expected),
            "certificates": certs,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_jsonable(), indent=2)


def decide_ast(fas: Fas, cfg: SolveConfig | None = None) -> Verdict:
    cfg = cfg or SolveConfig()
    sub = reachable(fas)
    sol = solve_at_one(sub, cfg)
    verdict = Verdict()
    start_val = sol.values[sub.start]
    verdict.p_term = start_val
    if isinstance(start_val, Fraction):
        assignment = {
            v: x for v, x in sol.values.items() if isinstance(x, Fraction)
        }
        if start_val == ONE and all(
            isinstance(x, Fraction) for x in sol.values.values()
        ):
            verdict.ast = "yes"
            verdict.certificates.append(FixpointAtOne(assignment))
        elif start_val < ONE:
            # The least-fixpoint values themselves form the pre-fixpoint
            # witness; interval values are widened upward, so re-check.
            witness = {v: value_hi(x) for v, x in sol.values.items()}
            if _is_prefixpoint(sub, witness):
                verdict.ast = "no"
                verdict.certificates.append(PreFixpointBelowOne(witness))
            else:
                verdict.ast = "inconclusive"
        else:
            verdict.ast = "inconclusive"
    else:
        if start_val.hi < ONE:
            witness = {v: value_hi(x) for v, x in sol.values.items()}
            if _is_prefixpoint(sub, witness):
                verdict.ast = "no"
                verdict.certificates.append(PreFixpointBelowOne(witness))
            else:
                verdict.ast = "inconclusive"
        else:
            verdict.ast = "inconclusive"
        verdict.notes.extend(sol.diagnostics)
    verdict._solution = sol  # stashed for decide_past
    return verdict


def decide_past(fas: Fas, cfg: SolveConfig | None = None) -> Verdict:
    cfg = cfg or SolveConfig()
    verdict = decide_ast(fas, cfg)
    if verdict.ast == "no":
        verdict.past = "no"
        return verdict
    if verdict.ast == "inconclusive":
        verdict.past = "inconclusive"
        return verdict
    sub = reachable(fas)
    sol: MinSolution = verdict._solution
    try:
        res: DerivativeResult = expected_steps(sub, sol)
    except SolverError as e:
        verdict.past = "inconclusive"
        verdict.notes.append(str(e))
        return verdict
    solution = {v: ONE for v in res.order}
    if res.value == math.inf:
        verdict.past = "no"
        verdict.expected = math.inf
        verdict.certificates.append(
            CriticalJacobian(res.order, res.kernel, solution)
        )
    else:
        verdict.past = "yes"
        verdict.expected = res.value
        verdict.certificates.append(
            NonsingularLinearSolve(res.order, res.d_vector, solution)
        )
    return verdict


# ---------------------------------------------------------------------------
# Independent certificate verification


def _eval_at(p: Poly, env: dict[int, Fraction]) -> Fraction:
    v = p.eval(env)
    assert isinstance(v, (int, Fraction))
    return Fraction(v)


def _is_prefixpoint(fas: Fas, assignment: dict[int, Fraction]) -> bool:
    env = dict(assignment)
    env[z_vid()] = ONE
    return all(_eval_at(p, env) <= assignment[v] for v, p in fas.eqs.items())


def verify_certificate(fas: Fas, cert: Certificate) -> bool:
    """Re-check a certificate by direct polynomial evaluation."""
    sub = reachable(fas)
    z = z_vid()
    if isinstance(cert, FixpointAtOne):
        env = dict(cert.assignment)
        env[z] = ONE
        if any(v not in cert.assignment for v in sub.eqs):
            return False
        return (
            all(_eval_at(p, env) == cert.assignment[v] for v, p in sub.eqs.items())
            and cert.assignment[sub.start] == ONE
        )
    if isinstance(cert, PreFixpointBelowOne):
        if any(v not in cert.assignment for v in sub.eqs):
            return False
        return (
            _is_prefixpoint(sub, cert.assignment)
            and cert.assignment[sub.start] < ONE
        )
    if isinstance(cert, CriticalJacobian):
        order = cert.order
        point = {v: cert.solution.get(v, ONE) for v in order}
        point[z] = ONE
        if all(x == 0 for x in cert.kernel):
            return False
        for i, v in enumerate(order):
            acc = cert.kernel[i]
            for j, w in enumerate(order):
                acc -= _eval_at(sub.eqs[v].derivative(w), point) * cert.kernel[j]
            if acc != 0:
                return False
        return True
    if isinstance(cert, NonsingularLinearSolve):
        order = cert.order
        point = {v: cert.solution.get(v, ONE) for v in order}
        point[z] = ONE
        for v in order:
            acc = cert.d_vector[v]
            for w in order:
                acc -= _eval_at(sub.eqs[v].derivative(w), point) * cert.d_vector[w]
            if acc != _eval_at(sub.eqs[v].derivative(z), point):
                return False
        return True
    raise TypeError(cert)
