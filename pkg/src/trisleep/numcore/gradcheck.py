"""Finite-difference verification of the analytic gradients.

The closure is re-evaluated under a float64 shadow dtype so the central
differences (h = 1e-3) are numerically meaningful against float32 training
code. The numeric side never touches the backward pass: it only perturbs
parameter values and reruns the forward, which keeps the two routes
independent.
"""

from dataclasses import dataclass

import numpy as np

from .tensor import Parameter, no_grad, shadow_dtype


class DeterminismError(RuntimeError):
    """Two forward evaluations of the closure disagreed."""


@dataclass
class ParamReport:
    name: str
    max_rel_err: float
    passed: bool
    checked_elements: int


@dataclass
class GradCheckReport:
    params: list
    rel_tol: float

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.params)

    def format_table(self) -> str:
        width = max((len(p.name) for p in self.params), default=4)
        lines = [f"{'parameter'.ljust(width)}  max_rel_err  result"]
        for p in self.params:
            lines.append(f"{p.name.ljust(width)}  {p.max_rel_err:11.3e}  {'pass' if p.passed else 'FAIL'}")
        lines.append(f"overall: {'pass' if self.passed else 'FAIL'} (rel_tol={self.rel_tol:g})")
        return "\n".join(lines)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float) -> np.ndarray:
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.where(diff <= atol, 0.0, diff / np.maximum(denom, atol))
    return err


def gradcheck(
    closure,
    params: list[Parameter],
    rel_tol: float = 1e-3,
    h: float = 1e-3,
    atol: float = 1e-8,
    max_elements_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare backward() gradients of ``closure`` against central differences.

    closure: zero-argument callable returning a scalar Tensor; it must be
    deterministic (dropout off) — two forward passes that disagree raise
    DeterminismError. max_elements_per_param caps the perturbed coordinates
    per parameter (seeded subsample) for large models; None checks every one.
    """
    saved = [p.data for p in params]
    try:
        with shadow_dtype(np.float64):
            for p in params:
                p.data = p.data.astype(np.float64)
                p.grad = None

            first = closure().data.item()
            second = closure().data.item()
            if first != second:
                raise DeterminismError(
                    f"closure is not deterministic: two forward passes gave {first!r} and {second!r}"
                )

            loss = closure()
            loss.backward()
            analytic = {p.name: np.array(p.grad, dtype=np.float64, copy=True) for p in params}

            reports = []
            for p in params:
                flat = p.data.reshape(-1)
                n = flat.size
                if max_elements_per_param is not None and n > max_elements_per_param:
                    picker = rng if rng is not None else np.random.default_rng(0)
                    idx = np.sort(picker.choice(n, size=max_elements_per_param, replace=False))
                else:
                    idx = np.arange(n)
                numeric = np.empty(idx.size, dtype=np.float64)
                with no_grad():
                    for j, e in enumerate(idx):
                        orig = flat[e]
                        flat[e] = orig + h
                        f_plus = closure().data.item()
                        flat[e] = orig - h
                        f_minus = closure().data.item()
                        flat[e] = orig
                        numeric[j] = (f_plus - f_minus) / (2.0 * h)
                ana = analytic[p.name].reshape(-1)[idx]
                err = _relative_error(ana, numeric, atol)
                max_err = float(err.max()) if err.size else 0.0
                reports.append(ParamReport(p.name, max_err, max_err <= rel_tol, int(idx.size)))
    finally:
        for p, data in zip(params, saved):
            p.data = data
            p.grad = None

    return GradCheckReport(reports, rel_tol)
