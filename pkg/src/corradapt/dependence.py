"""Dependence coefficients for discrete joint measures.

The central quantity is the Gibbs-dependence coefficient: the supremum,
over configurations x with positive mass, of the average over coordinates
i of the total variation distance between the i-th marginal and the i-th
conditional given the other coordinates. It is 0 exactly for product
measures, and for undirected chains it is bounded by the closed-form
potential ratio (R^2 - r^2) / (R^2 + r^2).

``gibbs_dependence`` is an exact brute-force enumeration over the dense
table, O(|alphabet|^n * n * |alphabet|); it refuses instances above the
table cap (use ``markov_psi_bound`` for large chains). The supremum
quantifies over positive-mass tuples only: off the support the
conditional is undefined, and chains with positive potentials have full
support anyway, so the restriction only matters for degenerate tables.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SizeCapError, ValidationError
from .measures import ChainMeasure, Measure, ProductMeasure, TABLE_CAP

ProgressCallback = Callable[[float], None]


def tv(p, q) -> float:
    """Total variation distance between two distributions: half the l1 gap."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValidationError(f"support sizes differ: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


@dataclass(frozen=True)
class PsiReport:
    """Exact Gibbs-dependence value with the witness configuration."""

    psi: float
    argmax_tuple: tuple[int, ...]
    per_coordinate_tv: tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "psi": self.psi,
            "argmax_tuple": list(self.argmax_tuple),
            "per_coordinate_tv": list(self.per_coordinate_tv),
        }


@dataclass(frozen=True)
class ChainBoundReport:
    """Extreme potential values and the chain bound on Gibbs dependence."""

    R: float
    r: float
    R_bar: float

    def to_json(self) -> dict:
        return {"R": self.R, "r": self.r, "R_bar": self.R_bar}


def gibbs_dependence(
    measure: Measure,
    cap: int = TABLE_CAP,
    progress: ProgressCallback | None = None,
) -> PsiReport:
    """Exact Gibbs dependence by enumeration of all positive-mass tuples.

    Ties are broken toward the lexicographically smallest witness tuple,
    so the report is deterministic. ``progress`` (if given) is called with
    a fraction in [0,1] after each coordinate pass.
    """
    try:
        table = measure.table_array(cap)
    except SizeCapError as exc:
        raise SizeCapError(
            str(exc) + "; for chains, markov_psi_bound gives a closed-form bound"
        ) from None
    n = measure.n
    s = measure.alphabet.size
    total = table.reshape(-1)
    tv_sum = np.zeros(table.size)
    for i in range(n):
        rows = np.moveaxis(table, i, -1).reshape(-1, s)
        mass = rows.sum(axis=1)
        marg = rows.sum(axis=0)
        safe = np.where(mass > 0.0, mass, 1.0)
        cond = rows / safe[:, None]
        tv_rows = 0.5 * np.abs(cond - marg[None, :]).sum(axis=1)
        tv_rows[mass == 0.0] = 0.0
        shape = table.shape[:i] + table.shape[i + 1 :]
        expanded = np.broadcast_to(
            tv_rows.reshape(shape)[..., None], shape + (s,)
        )
        tv_sum += np.moveaxis(expanded, -1, i).reshape(-1)
        if progress is not None:
            progress((i + 1) / n)
    avg = tv_sum / n
    avg = np.where(total > 0.0, avg, -1.0)
    flat_idx = int(np.argmax(avg))  # first max in C order = lexicographic min
    witness = tuple(int(v) for v in np.unravel_index(flat_idx, table.shape))
    per_coord = tuple(
        tv(measure_conditional(table, i, witness), _table_marginal(table, i))
        for i in range(n)
    )
    return PsiReport(
        psi=float(np.mean(per_coord)),
        argmax_tuple=witness,
        per_coordinate_tv=per_coord,
    )


def _table_marginal(table: np.ndarray, i: int) -> np.ndarray:
    axes = tuple(j for j in range(table.ndim) if j != i)
    return table.sum(axis=axes)


def measure_conditional(table: np.ndarray, i: int, x: tuple[int, ...]) -> np.ndarray:
    """Conditional of coordinate i in a dense table given the rest of x."""
    index = list(x)
    index[i] = slice(None)
    row = table[tuple(index)]
    return row / row.sum()


def markov_psi_bound(measure: Measure) -> ChainBoundReport:
    """Closed-form bound for chains: scan potentials for R and r."""
    if not isinstance(measure, ChainMeasure):
        raise ValidationError("markov_psi_bound needs a chain measure")
    R = float(measure.potentials.max())
    r = float(measure.potentials.min())
    return ChainBoundReport(R=R, r=r, R_bar=(R**2 - r**2) / (R**2 + r**2))


def is_product(measure: Measure, tol: float = 1e-9, cap: int = TABLE_CAP) -> bool:
    """True iff the dense table factorizes as the product of its marginals."""
    if isinstance(measure, ProductMeasure):
        return True
    table = measure.table_array(cap)
    product = np.array(1.0)
    for i in range(measure.n):
        product = np.multiply.outer(product, _table_marginal(table, i))
    return bool(np.max(np.abs(table - product.reshape(table.shape))) <= tol)
