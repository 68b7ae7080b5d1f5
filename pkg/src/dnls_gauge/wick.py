"""Exact Gaussian moments of the quartic form F_N - F_M.

Write ``F_N - F_M = 2 Re Z`` with

    Z = sum_{t in A} w(t) u(n1) u(n2) conj(u(m1)) conj(u(m2)),
    w(t) = |m1|^{2s} / (m1 - n1),

where ``A`` holds the tuples ``t = (n1, n2, m1, m2)`` of F_N that are not
tuples of F_M.  Then ``E (F_N - F_M)^2 = 2 E|Z|^2 + 2 Re E[Z^2]``.  Each
expectation is an eight-fold product of coefficients and is evaluated by the
complex Wick rule

    E[prod_j u(a_j) prod_j conj(u(b_j))] = sum_{sigma in S_4} prod_j delta(b_j, a_sigma(j)) lam(a_j),

one permutation at a time.  Within a permutation the contraction deltas turn
all eight indices into functions of ``a = (a1..a4)``; the two momentum
constraints are linear in ``a`` and are solved for pivot variables, leaving
at most four free indices to enumerate.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

MAX_N = 64
PERMUTATIONS: tuple[tuple[int, ...], ...] = tuple(itertools.permutations(range(4)))
BLOCKS = ("zzbar", "zz")

Covariance = Callable[[np.ndarray], np.ndarray]


class ComplexityError(ValueError):
    """Requested cutoff exceeds the enumeration guard."""


def pair_moment(n: int | np.ndarray, s: float):
    """E|u(n)|^2 = 1 / (1 + |n|^{2s})."""
    return 1.0 / (1.0 + np.abs(n) ** (2.0 * s))


def gaussian_moment(a: Sequence[int], b: Sequence[int], lam: Callable[[int], float]) -> float:
    """``E[prod u(a_i) prod conj(u(b_j))]`` for independent circular coefficients.

    Zero unless ``a`` and ``b`` agree as multisets; otherwise the sum over all
    bijections pairing each ``b_j`` with an equal ``a_i``.
    """
    if len(a) != len(b) or sorted(a) != sorted(b):
        return 0.0
    total = 0.0
    for perm in itertools.permutations(range(len(a))):
        if all(b[j] == a[perm[j]] for j in range(len(b))):
            total += math.prod(lam(b[j]) for j in range(len(b)))
    return total


def label(sigma: Sequence[int]) -> str:
    """One-line notation with 1-based images, e.g. ``(2,1,4,3)``."""
    return "(" + ",".join(str(i + 1) for i in sigma) + ")"


@dataclass
class WickMoment:
    value: float
    per_permutation: dict[tuple[str, str], float] = field(repr=False)
    covariance_used: str = "exact 1/(1+|n|^{2s})"

    def block_total(self, block: str) -> float:
        return math.fsum(v for (b, _), v in self.per_permutation.items() if b == block)


def _roles(sigma: Sequence[int], block: str):
    """Positions in ``a`` of (n1, n2, m1, m2) for both tuples."""
    s = sigma
    if block == "zzbar":
        # u-side a = (n1, n2, m1', m2'), conj-side b = (m1, m2, n1', n2') = a[sigma]
        return (0, 1, s[0], s[1]), (s[2], s[3], 2, 3)
    # u-side a = (n1, n2, n1', n2'), conj-side b = (m1, m2, m1', m2') = a[sigma]
    return (0, 1, s[0], s[1]), (2, 3, s[2], s[3])


def _constraint_rows(roles) -> np.ndarray:
    rows = []
    for n1, n2, m1, m2 in roles:
        r = np.zeros(4, dtype=int)
        r[n1] += 1
        r[n2] += 1
        r[m1] -= 1
        r[m2] -= 1
        rows.append(r)
    return np.array(rows)


def _solve_plan(C: np.ndarray):
    """Pick pivot columns so the momentum constraints can be solved for them."""
    rank = np.linalg.matrix_rank(C)
    if rank == 0:
        return [], list(range(4)), None, None
    # reduce to independent rows
    rows = C if rank == 2 else C[[int(np.argmax(np.any(C != 0, axis=1)))]]
    for piv in itertools.combinations(range(4), rank):
        sub = rows[:, piv].astype(float)
        if abs(np.linalg.det(sub)) > 0.5:
            free = [i for i in range(4) if i not in piv]
            inv = np.linalg.inv(sub)
            return list(piv), free, inv, rows[:, free].astype(float)
    raise AssertionError("no pivot set found")  # pragma: no cover


def _tuple_weight(n1, n2, m1, m2, M: int, s: float) -> np.ndarray:
    in_diff = np.maximum(np.maximum(np.abs(n1), np.abs(n2)), np.maximum(np.abs(m1), np.abs(m2))) > M
    ok = (n1 != m1) & in_diff
    d = np.where(ok, m1 - n1, 1)
    return np.where(ok, np.abs(m1).astype(float) ** (2 * s) / d, 0.0)


def _factor_sum(roles, N: int, M: int, s: float, lam: Covariance) -> float:
    """Sum for a contraction whose two tuples share no variable.

    Both momentum constraints then hold identically, so the four-fold sum
    splits into a product of two double sums.
    """
    rng = np.arange(-N, N + 1)
    out = 1.0
    for role in roles:
        used = sorted(set(role))
        grids = [g.ravel() for g in np.meshgrid(*([rng] * len(used)), indexing="ij")]
        a = dict(zip(used, grids))
        w = _tuple_weight(*(a[r] for r in role), M, s)
        out *= math.fsum(w * math.prod(lam(a[v]) for v in used))
    return out


def _permutation_sum(sigma, block: str, N: int, M: int, s: float, lam: Covariance, chunk: int = 1 << 22) -> float:
    roles = _roles(sigma, block)
    if any(r[0] == r[2] for r in roles):
        return 0.0  # n1 = m1 identically in one of the tuples
    C = _constraint_rows(roles)
    if not np.any(C) and not set(roles[0]) & set(roles[1]):
        return _factor_sum(roles, N, M, s, lam)
    piv, free, inv, cfree = _solve_plan(C)
    rng = np.arange(-N, N + 1)
    partials = []
    # enumerate the free variables, the leading one in slices to bound memory
    lead_vals = rng if free else [None]
    per_slice = (2 * N + 1) ** max(len(free) - 1, 0)
    step = max(1, chunk // max(per_slice, 1))
    lead_vals = list(lead_vals)
    for start in range(0, len(lead_vals), step):
        lead = np.asarray(lead_vals[start : start + step])
        grids = np.meshgrid(lead, *([rng] * (len(free) - 1)), indexing="ij")
        a = [None] * 4
        for var, g in zip(free, grids):
            a[var] = g.ravel()
        size = a[free[0]].size
        if piv:
            fvals = np.stack([a[v] for v in free])
            pv = -inv @ (cfree @ fvals)
            rounded = np.rint(pv)
            good = np.all(np.abs(pv - rounded) < 1e-9, axis=0) & np.all(np.abs(rounded) <= N, axis=0)
            for k, var in enumerate(piv):
                a[var] = rounded[k].astype(int)
            a = [x[good] for x in a]
            if a[0].size == 0:
                continue
        elif size == 0:
            continue
        (p1, p2, p3, p4), (q1, q2, q3, q4) = roles
        w = _tuple_weight(a[p1], a[p2], a[p3], a[p4], M, s) * _tuple_weight(a[q1], a[q2], a[q3], a[q4], M, s)
        if not np.any(w):
            continue
        lam_prod = lam(a[0]) * lam(a[1]) * lam(a[2]) * lam(a[3])
        partials.append(math.fsum(w * lam_prod))
    return math.fsum(partials)


def second_moment_diff(N: int, M: int, s: float, covariance: Covariance | None = None) -> WickMoment:
    """Exact ``E[(F_N - F_M)^2]`` under the Gaussian measure.

    ``covariance`` overrides ``n -> E|u(n)|^2`` (used to test homogeneity).
    """
    if not 0 <= M <= N:
        raise ValueError("need 0 <= M <= N")
    if N > MAX_N:
        raise ComplexityError(f"N={N} exceeds the enumeration guard {MAX_N}")
    lam = covariance if covariance is not None else (lambda n: pair_moment(n, s))
    per: dict[tuple[str, str], float] = {}
    for block in BLOCKS:
        for sigma in PERMUTATIONS:
            v = 0.0 if M == N else 2.0 * _permutation_sum(sigma, block, N, M, s, lam)
            per[(block, label(sigma))] = v
    used = "exact 1/(1+|n|^{2s})" if covariance is None else "override"
    return WickMoment(math.fsum(per.values()), per, used)


def rate_table(s: float, M_list: Sequence[int], N_ref: int) -> list[tuple[int, float]]:
    """``(M, ||F_{N_ref} - F_M||_{L2(gamma_s)})`` for each M."""
    rows = []
    for M in M_list:
        if M > N_ref:
            raise ValueError(f"M={M} exceeds N_ref={N_ref}")
        v = second_moment_diff(N_ref, M, s).value
        rows.append((int(M), math.sqrt(max(v, 0.0))))
    return rows


def write_rate_csv(path: str | Path, rows, s: float, N_ref: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# s={s!r},N_ref={N_ref}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["M", "l2_distance"])
        for M, d in rows:
            w.writerow([M, repr(float(d))])
