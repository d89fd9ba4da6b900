"""Embedded space-group table: generator parsing, closure, and the
operation-set signature used for group identification.

The signature of an operation set is deliberately origin- and
setting-independent: centering class, centering order, and the sorted
multiset of (det, trace, axis-direction class, canonical intrinsic
translation) over the coset representatives modulo centering translations.
"""

from __future__ import annotations

import re
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import numpy as np

I3 = ((1, 0, 0), (0, 1, 0), (0, 0, 1))

_TERM = re.compile(r"([+-]?)(\d*)([xyz])|([+-]?\d+(?:/\d+)?)")


def parse_triplet(triplet: str) -> tuple[tuple, tuple]:
    """Parse 'x,y+1/2,-z' into (rotation rows, translation Fractions)."""
    rows = []
    trans = []
    for comp in triplet.split(","):
        row = [0, 0, 0]
        t = Fraction(0)
        pos = 0
        comp = comp.strip()
        for m in _TERM.finditer(comp):
            if m.start() != pos:
                raise ValueError(f"cannot parse triplet component {comp!r}")
            pos = m.end()
            if m.group(3):
                sign = -1 if m.group(1) == "-" else 1
                coef = int(m.group(2)) if m.group(2) else 1
                row["xyz".index(m.group(3))] += sign * coef
            else:
                t += Fraction(m.group(4))
        if pos != len(comp):
            raise ValueError(f"cannot parse triplet component {comp!r}")
        rows.append(tuple(row))
        trans.append(t % 1)
    return tuple(rows), tuple(trans)


def _matmul(a, b):
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3))
        for i in range(3)
    )


def _matvec(a, v):
    return tuple(sum(a[i][k] * v[k] for k in range(3)) for i in range(3))


def close_ops(gens, cap: int = 200) -> list[tuple[tuple, tuple]]:
    """Close generators under composition; translations mod 1 (exact).

    Internally translations are twelfths (integers mod 12), which is exact
    for every space-group setting in the table.
    """
    def to12(op):
        w, tr = op
        t12 = []
        for x in tr:
            f = Fraction(x) % 1
            if 12 % f.denominator:
                raise ValueError(f"translation {x} not representable in twelfths")
            t12.append(int(f * 12))
        return (w, tuple(t12))

    ident = (I3, (0, 0, 0))
    ops = {ident}
    frontier = [ident] + [to12(g) for g in gens]
    ops.update(frontier)
    while frontier:
        new = []
        for w1, t1 in frontier:
            for w2, t2 in list(ops):
                w = _matmul(w1, w2)
                t = tuple((sum(w1[i][k] * t2[k] for k in range(3)) + t1[i]) % 12
                          for i in range(3))
                if (w, t) not in ops:
                    ops.add((w, t))
                    new.append((w, t))
        frontier = new
        if len(ops) > cap:
            raise RuntimeError("operation closure exceeded cap")
    return sorted((w, tuple(Fraction(x, 12) for x in t)) for w, t in ops)


def _det(w) -> int:
    return (w[0][0] * (w[1][1] * w[2][2] - w[1][2] * w[2][1])
            - w[0][1] * (w[1][0] * w[2][2] - w[1][2] * w[2][0])
            + w[0][2] * (w[1][0] * w[2][1] - w[1][1] * w[2][0]))


def _trace(w) -> int:
    return w[0][0] + w[1][1] + w[2][2]


def op_order(w) -> int:
    p = w
    for n in range(1, 13):
        if p == I3:
            return n
        p = _matmul(p, w)
    raise ValueError("rotation part has no finite order <= 12")


def rotation_axis(w) -> tuple[int, int, int] | None:
    """Primitive integer axis direction of a proper rotation (None for I)."""
    if w == I3:
        return None
    n = op_order(w)
    acc = np.zeros((3, 3), dtype=int)
    p = np.array(I3)
    wm = np.array(w)
    for _ in range(n):
        acc += p
        p = p @ wm
    for j in range(3):
        col = acc[:, j]
        if np.any(col):
            g = np.gcd.reduce(np.abs(col[col != 0]))
            v = tuple(int(x) for x in col // g)
            for x in v:
                if x:
                    return v if x > 0 else tuple(-y for y in v)
    return None


def axis_class(w) -> str:
    """Direction class of an operation's axis in the conventional basis."""
    d = _det(w)
    wp = w if d > 0 else tuple(tuple(-x for x in row) for row in w)
    if wp == I3:
        return "-"
    axis = rotation_axis(wp)
    key = tuple(sorted(abs(x) for x in axis))
    return {(0, 0, 1): "p", (0, 1, 1): "f", (1, 1, 1): "d"}.get(key, "o")


def _round_frac12(x: float) -> Fraction:
    return Fraction(round(x * 12), 12) % 1


def signature(ops) -> tuple:
    """Setting-independent signature of a conventional-cell operation set.

    ``ops`` are (rotation rows, translation) with translations as floats or
    Fractions in [0, 1); the set must include centering translations.
    """
    ops = [(tuple(tuple(int(x) for x in row) for row in w),
            tuple(float(t) for t in tr)) for w, tr in ops]
    centerings = [np.array(tr) for w, tr in ops
                  if w == I3 and any(abs(t) > 1e-6 for t in tr)]
    m = len(centerings) + 1
    if m == 1:
        cclass = "P"
    elif m == 2:
        halves = sum(1 for t in centerings[0] if abs(t - 0.5) < 1e-6)
        cclass = "I" if halves == 3 else "S"
    elif m == 3:
        cclass = "R"
    elif m == 4:
        cclass = "F"
    else:
        cclass = f"?{m}"

    base = np.array(list(np.ndindex(5, 5, 5)), dtype=float) - 2.0
    lattice_pts = np.concatenate([base] + [base + c for c in centerings])

    reps: dict[tuple, tuple] = {}
    for w, tr in ops:
        reps.setdefault(w, tr)
    items = []
    for w, tr in reps.items():
        n = op_order(w)
        wm = np.array(w)
        proj = np.zeros((3, 3))
        p = np.eye(3)
        for _ in range(n):
            proj += p
            p = p @ wm
        proj /= n
        w_int = proj @ np.array(tr)
        residues = w_int[None, :] - lattice_pts @ proj.T
        best = residues[np.argmin(np.einsum("ij,ij->i", residues, residues))]
        canon = tuple(sorted(min(f, 1 - f) for f in
                             (_round_frac12(float(x) % 1.0) for x in best)))
        items.append((_det(w), _trace(w), axis_class(w), canon))
    return (cclass, m, tuple(sorted(items)))


@lru_cache(maxsize=1)
def load_group_table() -> dict[int, tuple[str, tuple]]:
    """number -> (Hermann-Mauguin symbol, generator ops)."""
    path = resources.files("crysalign.data") / "spacegroup_generators.txt"
    table: dict[int, tuple[str, tuple]] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        num_s, hm, gens_s = line.split("\t")
        gens = tuple(parse_triplet(g) for g in gens_s.split(";"))
        table[int(num_s)] = (hm, gens)
    if len(table) != 230:
        raise RuntimeError(f"group table has {len(table)} entries, expected 230")
    return table


@lru_cache(maxsize=1)
def signature_index() -> dict[tuple, tuple[int, ...]]:
    """signature -> sorted space-group numbers sharing it."""
    index: dict[tuple, list[int]] = {}
    for num, (_, gens) in load_group_table().items():
        ops = close_ops(gens)
        index.setdefault(signature(ops), []).append(num)
    return {sig: tuple(sorted(nums)) for sig, nums in index.items()}


def group_order(num: int) -> int:
    _, gens = load_group_table()[num]
    return len(close_ops(gens))
