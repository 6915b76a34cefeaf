"""Structured records of inequality checks.

A :class:`Ledger` row stores both sides of an inequality ``lhs <= rhs``
together with the signed gap ``rhs - lhs`` and a verdict:

* ``Equality`` when ``|gap| <= tol``,
* ``Violated`` when ``gap < -tol``,
* ``Holds`` otherwise,
* ``Skipped`` when a hypothesis of the inequality is not met (the reason is
  kept in ``note``).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

HOLDS = "Holds"
EQUALITY = "Equality"
VIOLATED = "Violated"
SKIPPED = "Skipped"

CSV_COLUMNS = ("name", "lhs", "rhs", "gap", "tol", "verdict", "provenance")


def _verdict(gap, tol):
    if math.isnan(gap):
        return VIOLATED
    if abs(gap) <= tol:
        return EQUALITY
    if gap < -tol:
        return VIOLATED
    return HOLDS


@dataclass
class Ledger:
    """One inequality check ``lhs <= rhs``."""

    name: str
    lhs: float
    rhs: float
    gap: float
    tol: float
    verdict: str
    provenance: str = ""
    note: str = ""
    details: dict = field(default_factory=dict)

    @classmethod
    def compare(cls, name, lhs, rhs, tol, provenance="", relative=False, note="", details=None):
        """Build a ledger for ``lhs <= rhs``.

        With ``relative=True`` the stored tolerance is ``tol * max(1, |lhs|, |rhs|)``.
        Both sides infinite (``+inf <= +inf``) is recorded as a vacuous ``Holds``.
        """
        lhs = float(lhs)
        rhs = float(rhs)
        if relative:
            scale = max(1.0, abs(lhs) if math.isfinite(lhs) else 1.0,
                        abs(rhs) if math.isfinite(rhs) else 1.0)
            tol = tol * scale
        tol = float(tol)
        if math.isinf(lhs) and math.isinf(rhs) and lhs > 0 and rhs > 0:
            return cls(name, lhs, rhs, 0.0, tol, HOLDS, provenance,
                       (note + "; " if note else "") + "vacuous: both sides infinite",
                       dict(details or {}))
        gap = rhs - lhs
        return cls(name, lhs, rhs, gap, tol, _verdict(gap, tol), provenance, note,
                   dict(details or {}))

    @classmethod
    def skipped(cls, name, reason, provenance="", lhs=math.nan, rhs=math.nan, details=None):
        """A check whose hypotheses are not satisfied."""
        return cls(name, float(lhs), float(rhs), math.nan, 0.0, SKIPPED, provenance,
                   reason, dict(details or {}))

    @property
    def ok(self):
        """True unless the verdict is ``Violated``."""
        return self.verdict != VIOLATED

    def row(self):
        return [self.name, _fmt(self.lhs), _fmt(self.rhs), _fmt(self.gap),
                _fmt(self.tol), self.verdict, self.provenance]

    def to_dict(self):
        d = asdict(self)
        for key in ("lhs", "rhs", "gap", "tol"):
            d[key] = _json_float(d[key])
        d["details"] = _jsonable(d["details"])
        return d


def _fmt(x):
    return repr(float(x))


def _json_float(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return repr(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if isinstance(obj, float):
        return _json_float(obj)
    return obj


def ledgers_to_csv(ledgers):
    """CSV text with the columns ``name,lhs,rhs,gap,tol,verdict,provenance``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for led in ledgers:
        writer.writerow(led.row())
    return buf.getvalue()


def ledgers_to_jsonl(ledgers):
    """One JSON object per line."""
    return "".join(json.dumps(led.to_dict(), sort_keys=True) + "\n" for led in ledgers)


def write_csv(ledgers, path):
    with open(path, "w", newline="") as fh:
        fh.write(ledgers_to_csv(ledgers))


def write_jsonl(ledgers, path):
    with open(path, "w") as fh:
        fh.write(ledgers_to_jsonl(ledgers))


def read_csv(path):
    """Read a ledger CSV back into :class:`Ledger` objects (details are not stored)."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(Ledger(rec["name"], float(rec["lhs"]), float(rec["rhs"]),
                              float(rec["gap"]), float(rec["tol"]), rec["verdict"],
                              rec["provenance"]))
    return out
