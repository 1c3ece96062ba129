"""SDPA sparse text format.

The SDPA primal form is ``minimize c x`` subject to
``F(x) = sum_i x_i F_i - F_0`` PSD.  Equalities ``a x = b`` become a
diagonal (LP) block holding ``a x - b >= 0`` and ``b - a x >= 0``.
Numbers are printed with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import numpy as np

from .problem import ConicData, SdpProblem

__all__ = ["write_sdpa", "read_sdpa"]


def _fmt(v: float) -> str:
    return repr(float(v))


def write_sdpa(problem: SdpProblem | ConicData, comment: str = "lkdelay export") -> str:
    data = problem.conic_data() if isinstance(problem, SdpProblem) else problem
    N = data.nvar
    neq = data.A.shape[0]
    struct = [side for side, _, _ in data.blocks]
    if neq:
        struct.append(-2 * neq)
    lines = [f'"{comment}', str(N), str(len(struct)), " ".join(str(s) for s in struct)]
    lines.append(" ".join(_fmt(v) for v in data.c))
    entries = []
    for blk, (side, F, g) in enumerate(data.blocks, start=1):
        iu = np.triu_indices(side)
        flat = iu[0] * side + iu[1]
        # F_0 = -g
        for k, (i, j) in zip(flat, zip(*iu)):
            if g[k] != 0.0:
                entries.append((0, blk, i + 1, j + 1, -g[k]))
        Fu = F[flat].tocoo()
        for row, var, val in zip(Fu.row, Fu.col, Fu.data):
            if val != 0.0:
                entries.append((var + 1, blk, iu[0][row] + 1, iu[1][row] + 1, val))
    if neq:
        blk = len(data.blocks) + 1
        A = data.A.tocoo()
        for k, bk in enumerate(data.b):
            if bk != 0.0:
                entries.append((0, blk, k + 1, k + 1, bk))
                entries.append((0, blk, neq + k + 1, neq + k + 1, -bk))
        for row, var, val in zip(A.row, A.col, A.data):
            entries.append((var + 1, blk, row + 1, row + 1, val))
            entries.append((var + 1, blk, neq + row + 1, neq + row + 1, -val))
    entries.sort(key=lambda e: e[:4])
    lines.extend(f"{m} {b} {i} {j} {_fmt(v)}" for m, b, i, j, v in entries)
    return "\n".join(lines) + "\n"


def read_sdpa(text: str) -> dict:
    """Parse SDPA text into ``{c, struct, mats}``; ``mats[m][b]`` is a dense block."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith(('"', "*"))]
    N = int(lines[0].split()[0])
    nblocks = int(lines[1].split()[0])
    struct = [int(v) for v in lines[2].replace(",", " ").split()[:nblocks]]
    c = np.array([float(v) for v in lines[3].replace(",", " ").split()[:N]])
    mats = [[np.zeros((abs(s), abs(s))) for s in struct] for _ in range(N + 1)]
    for ln in lines[4:]:
        m, b, i, j, v = ln.split()
        m, b, i, j = int(m), int(b) - 1, int(i) - 1, int(j) - 1
        mats[m][b][i, j] = float(v)
        mats[m][b][j, i] = float(v)
    return {"c": c, "struct": struct, "mats": mats}
