"""Finite-difference gradient checker for tape-computed gradients.

Runs the function twice per probed coordinate (central differences) and
compares against the tape gradient. Failures are reported, never raised;
callers assert on the report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import Xorshift64Star

# Relative error uses a floor so exactly- and nearly-zero gradients do not
# divide finite-difference noise (~1e-12 at eps=1e-5, 64-bit) by ~0.
REL_FLOOR = 1e-6


@dataclass
class ParamReport:
    name: str
    checked: int
    max_rel_err: float
    worst_index: tuple = ()
    tape_grad: float = 0.0
    fd_grad: float = 0.0

    def __str__(self):
        return (
            f"{self.name}: max_rel_err={self.max_rel_err:.3e} over {self.checked} coords "
            f"(worst idx={self.worst_index}: tape={self.tape_grad:.6e} fd={self.fd_grad:.6e})"
        )


@dataclass
class GradCheckReport:
    params: list[ParamReport] = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max((p.max_rel_err for p in self.params), default=0.0)

    @property
    def total_checked(self) -> int:
        return sum(p.checked for p in self.params)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err <= tol

    def __str__(self):
        lines = [str(p) for p in self.params]
        lines.append(f"overall max_rel_err={self.max_rel_err:.3e} ({self.total_checked} coords)")
        return "\n".join(lines)


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), REL_FLOOR)


def grad_check(fn, params: dict[str, np.ndarray], eps: float = 1e-5,
               max_coords_per_param: int = 25, seed: int = 0) -> GradCheckReport:
    """Compare tape gradients of ``fn`` against central differences.

    ``fn(params) -> (loss_value, grads)`` must be deterministic and run in
    float64; ``grads`` maps parameter names to arrays. Coordinates are
    subsampled per parameter when the parameter is large.
    """
    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    _, grads = fn(params)
    rng = Xorshift64Star(seed)
    report = GradCheckReport()

    for name in sorted(params):
        p = params[name]
        g = np.asarray(grads[name], dtype=np.float64)
        n = p.size
        if n <= max_coords_per_param:
            coords = list(range(n))
        else:
            coords = sorted({rng.randint(n) for _ in range(max_coords_per_param)})
        pr = ParamReport(name=name, checked=len(coords), max_rel_err=0.0)
        flat = p.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            f_plus, _ = fn(params)
            flat[c] = orig - eps
            f_minus, _ = fn(params)
            flat[c] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            tg = float(g.reshape(-1)[c])
            e = rel_err(tg, fd)
            if e >= pr.max_rel_err:
                pr.max_rel_err = e
                pr.worst_index = np.unravel_index(c, p.shape)
                pr.tape_grad = tg
                pr.fd_grad = fd
        report.params.append(pr)
    return report
