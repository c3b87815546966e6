"""Reading and writing arrays and result tables.

Matrices and vectors are stored as ``.npy`` (exact) or as whitespace /
comma separated text (``.txt``, ``.csv``, ``.tsv``). Effect vectors may
also be ``.npz`` archives with ``u``, ``causal`` and ``psi``.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import EffectVector
from .exceptions import HeritabilityError


def load_array(path, ndim=None):
    p = Path(path)
    if not p.exists():
        raise HeritabilityError(f"file not found: {p}")
    if p.suffix == ".npy":
        a = np.load(p, allow_pickle=False)
    elif p.suffix == ".npz":
        with np.load(p, allow_pickle=False) as z:
            if len(z.files) != 1:
                raise HeritabilityError(f"{p} holds several arrays; expected one")
            a = z[z.files[0]]
    else:
        delim = "," if p.suffix == ".csv" else None
        try:
            a = np.loadtxt(p, delimiter=delim, ndmin=ndim or 1)
        except ValueError as exc:
            raise HeritabilityError(f"could not parse {p}: {exc}") from None
    a = np.asarray(a)
    if ndim is not None:
        if ndim == 1 and a.ndim == 2 and 1 in a.shape:
            a = a.ravel()
        if a.ndim != ndim:
            raise HeritabilityError(f"{p} has {a.ndim} dimensions, expected {ndim}")
    return a


def save_array(path, a):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    if p.suffix == ".npy":
        np.save(p, np.asarray(a))
    else:
        a = np.asarray(a)
        delim = "," if p.suffix == ".csv" else " "
        fmt = "%d" if np.issubdtype(a.dtype, np.integer) else "%.17g"
        np.savetxt(p, a, delimiter=delim, fmt=fmt)


def load_effects(path):
    p = Path(path)
    if p.suffix == ".npz":
        with np.load(p, allow_pickle=False) as z:
            if "u" not in z.files:
                raise HeritabilityError(f"{p} has no 'u' array")
            u = z["u"]
            causal = z["causal"] if "causal" in z.files else np.flatnonzero(u)
            psi = z["psi"] if "psi" in z.files else np.zeros_like(u)
        return EffectVector(u=u, causal=causal, psi=psi)
    u = load_array(p, ndim=1).astype(float)
    return EffectVector(u=u, causal=np.flatnonzero(u), psi=np.zeros_like(u))


def save_effects(path, eff: EffectVector):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, u=eff.u, causal=eff.causal, psi=eff.psi)


def format_value(v):
    """Shortest round-trip text for floats, so CSVs are exact and byte-stable."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(r.get(c)) for c in columns])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")
