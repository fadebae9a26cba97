"""CPLEX LP text dump, for debugging and diffing models."""

from __future__ import annotations

import math
import re
from typing import TextIO

import numpy as np

from .model import LinearModel, VarKind

_BAD = re.compile(r"[^A-Za-z0-9_.()]")


def lp_name(name: str) -> str:
    out = name.replace("[", "(").replace("]", ")")
    out = _BAD.sub("_", out)
    if not out or out[0].isdigit() or out[0] in ".":
        out = "x_" + out
    return out


def _terms(idx, coefs, names) -> str:
    parts = []
    for i, c in zip(idx, coefs):
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {abs(c):.17g} {names[i]}")
    if not parts:
        return "0"
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else s


def write_lp(model: LinearModel, fh: TextIO) -> None:
    names = [lp_name(n) for n in model.names]
    fh.write(f"\\ {model.name}\n")
    fh.write("Minimize\n" if model.objective_sense == "min" else "Maximize\n")
    c = model.objective
    nz = np.flatnonzero(c)
    obj = _terms(nz, c[nz], names)
    if model.objective_constant:
        obj += f" + {model.objective_constant:.17g} __const"
    fh.write(f" obj: {obj}\n")
    fh.write("Subject To\n")
    for r, rname in enumerate(model.row_names):
        expr, sense, rhs = model.constraint(r)
        fh.write(f" {lp_name(rname)}: {_terms(list(expr), list(expr.values()), names)} {sense.value} {rhs:.17g}\n")
    if model.objective_constant:
        fh.write(" __fix_const: __const = 1\n")
    fh.write("Bounds\n")
    lb, ub = model.column_bounds()
    for i, n in enumerate(names):
        lo = "-inf" if math.isinf(lb[i]) else f"{lb[i]:.17g}"
        hi = "+inf" if math.isinf(ub[i]) else f"{ub[i]:.17g}"
        fh.write(f" {lo} <= {n} <= {hi}\n")
    kinds = [v.kind for v in model.variables]
    gen = [n for n, k in zip(names, kinds) if k is VarKind.INTEGER]
    binv = [n for n, k in zip(names, kinds) if k is VarKind.BINARY]
    if gen:
        fh.write("General\n " + "\n ".join(gen) + "\n")
    if binv:
        fh.write("Binary\n " + "\n ".join(binv) + "\n")
    fh.write("End\n")
