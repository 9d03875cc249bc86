"""Morse series of the found rays and the relations they must satisfy.

With c_l the number of rays of index l and beta_l the Betti numbers of the
path space, the relations read

    sum_l c_l k^l = sum_l beta_l k^l + (1 + k) S(k),   S with coefficients >= 0.

The coefficients of S follow from the recursion S_0 = c_0 - beta_0,
S_l = c_l - beta_l - S_{l-1}.  Everything here is exact integer arithmetic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np


class DegenerateRecordWarning(UserWarning):
    """A ray with a conjugate endpoint (or no index) was left out of the series."""


@dataclass
class MorseLedger:
    counts: Dict[int, int]
    betti: Dict[int, int]
    max_degree: int
    s_coeffs: List[int] = field(default_factory=list)
    verdict: str = "unchecked"
    violated_at: Optional[int] = None
    degenerate_warning: bool = False
    field_label: str = "Z/2"
    inequalities: Dict[int, bool] = field(default_factory=dict)
    total_count: int = 0
    total_betti: int = 0
    s_at_one: int = 0
    remainder: int = 0
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        for name in ("counts", "betti"):
            d = {int(k): int(v) for k, v in getattr(self, name).items()}
            if any(k < 0 or v < 0 for k, v in d.items()):
                raise ValueError(f"{name} must map nonnegative degrees to nonnegative integers")
            setattr(self, name, d)
        if self.max_degree < 0:
            raise ValueError("max_degree must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "counts": {str(k): v for k, v in sorted(self.counts.items())},
            "betti": {str(k): v for k, v in sorted(self.betti.items())},
            "max_degree": self.max_degree,
            "s_coeffs": list(self.s_coeffs),
            "verdict": self.verdict,
            "violated_at": self.violated_at,
            "degenerate_warning": self.degenerate_warning,
            "field_label": self.field_label,
            "inequalities": {str(k): v for k, v in sorted(self.inequalities.items())},
            "total_count": self.total_count,
            "total_betti": self.total_betti,
            "s_at_one": self.s_at_one,
            "remainder": self.remainder,
            "notes": list(self.notes),
        }


CONTRACTIBLE_BETTI = {0: 1}


def assemble_series(records: Sequence, notes: Optional[list] = None) -> Dict[int, int]:
    """counts[l] = number of records with index l.

    Records without an index or with a conjugate endpoint are skipped with
    a :class:`DegenerateRecordWarning`; a line is appended to ``notes``.
    """
    counts: Dict[int, int] = {}
    for k, rec in enumerate(records):
        mu = getattr(rec, "index_mu", None)
        if mu is None or getattr(rec, "nondegenerate", None) is not True:
            msg = f"record {k} excluded: endpoint conjugate or index unknown"
            warnings.warn(msg, DegenerateRecordWarning, stacklevel=2)
            if notes is not None:
                notes.append(msg)
            continue
        counts[int(mu)] = counts.get(int(mu), 0) + 1
    return counts


def s_recursion(c: np.ndarray, b: np.ndarray) -> np.ndarray:
    """S coefficients for stacked coefficient arrays of shape (..., L+1)."""
    c = np.asarray(c, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    d = c - b
    S = np.empty_like(d)
    S[..., 0] = d[..., 0]
    for l in range(1, d.shape[-1]):
        S[..., l] = d[..., l] - S[..., l - 1]
    return S


def one_plus_k_times(S: np.ndarray) -> np.ndarray:
    """Coefficients of (1 + k) S(k), shape (..., L+2)."""
    S = np.asarray(S, dtype=np.int64)
    out = np.zeros(S.shape[:-1] + (S.shape[-1] + 1,), dtype=np.int64)
    out[..., :-1] += S
    out[..., 1:] += S
    return out


def first_negative(S: np.ndarray) -> np.ndarray:
    """Index of the first negative coefficient, -1 where there is none."""
    neg = np.asarray(S) < 0
    return np.where(neg.any(axis=-1), neg.argmax(axis=-1), -1)


def _dense(d: Dict[int, int], L: int) -> np.ndarray:
    return np.array([d.get(l, 0) for l in range(L + 1)], dtype=np.int64)


def build_ledger(records: Sequence, betti: Optional[Dict[int, int]] = None,
                 max_degree: Optional[int] = None, field_label: str = "Z/2") -> MorseLedger:
    """Counts from ``records`` against ``betti`` (contractible default), checked."""
    notes: list = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateRecordWarning)
        counts = assemble_series(records, notes)
    betti = dict(CONTRACTIBLE_BETTI if betti is None else betti)
    if max_degree is None:
        top = max(list(counts) + [k for k, v in betti.items() if v] + [0])
        max_degree = top + 2
    led = MorseLedger(counts, betti, int(max_degree), field_label=field_label, notes=notes)
    led.degenerate_warning = bool(caught)
    return check_relations(led)


def check_relations(ledger: MorseLedger) -> MorseLedger:
    """Fill S coefficients, verdict and the count identity up to ``max_degree``."""
    L = ledger.max_degree
    c = _dense(ledger.counts, L)
    b = _dense(ledger.betti, L)
    S = s_recursion(c, b)
    ledger.s_coeffs = [int(v) for v in S]
    k = int(first_negative(S))
    ledger.violated_at = None if k < 0 else k
    if k >= 0:
        ledger.verdict = "violated"
    elif ledger.degenerate_warning:
        ledger.verdict = "degenerate_warning"
    else:
        ledger.verdict = "consistent"
    ledger.inequalities = {l: bool(c[l] >= b[l]) for l in range(L + 1)}
    ledger.total_count = int(c.sum())
    ledger.total_betti = int(b.sum())
    ledger.s_at_one = int(S.sum())
    # sum c = sum beta + 2 S(1) holds exactly when the truncated S closes off
    ledger.remainder = int(S[-1])
    beyond = [l for l in list(ledger.counts) + list(ledger.betti) if l > L]
    if beyond:
        ledger.notes.append(f"degrees above {L} ignored: {sorted(set(beyond))}")
    return ledger


@dataclass
class ParityReport:
    contractible: bool
    total: int
    consistent: bool
    message: str
    largest_index: Optional[int] = None

    def to_dict(self) -> dict:
        return {"contractible": self.contractible, "total": self.total,
                "consistent": self.consistent, "message": self.message,
                "largest_index": self.largest_index}


def parity_check(ledger: MorseLedger, contractible: bool, betti_infinite: bool = False) -> ParityReport:
    """Compare the ray count with the odd-or-infinite / at-least-two alternatives."""
    total = sum(ledger.counts.values())
    largest = max(ledger.counts) if ledger.counts else None
    if contractible:
        ok = total % 2 == 1
        msg = ("odd count, as expected (a finite search cannot rule out infinitely many)" if ok else
               "even count: undercounted or non-minimal configuration (expected odd or infinite)")
        return ParityReport(True, total, ok, msg, largest)
    ok = total >= 2
    msg = "at least two rays, as expected" if ok else "fewer than two rays on a noncontractible region"
    if betti_infinite:
        msg += (f"; infinitely many rays are expected, which cannot be verified here "
                f"(found {total}, largest index {largest})")
    return ParityReport(False, total, ok, msg, largest)


def format_ledger(ledger: MorseLedger, parity: Optional[ParityReport] = None) -> str:
    """Human-readable audit text."""
    L = ledger.max_degree
    lines = [f"Morse audit up to degree {L} (coefficients in {ledger.field_label})", ""]
    lines.append("degree  count  betti  S   c>=beta")
    for l in range(L + 1):
        lines.append(f"{l:>6}  {ledger.counts.get(l, 0):>5}  {ledger.betti.get(l, 0):>5}  "
                     f"{ledger.s_coeffs[l]:>2}  {'yes' if ledger.inequalities.get(l) else 'NO'}")
    lines.append("")
    lines.append(f"total rays {ledger.total_count}, total betti {ledger.total_betti}, S(1) = {ledger.s_at_one}")
    ident = ledger.total_count == ledger.total_betti + 2 * ledger.s_at_one
    lines.append(f"count identity sum c = sum beta + 2 S(1): "
                 f"{'holds' if ident else f'off by the top coefficient S_{L} = {ledger.remainder}'}")
    verdict = ledger.verdict if ledger.violated_at is None else f"violated at degree {ledger.violated_at}"
    lines.append(f"verdict: {verdict}")
    if parity is not None:
        lines.append(f"parity: {'ok' if parity.consistent else 'WARNING'}: {parity.message}")
    for n in ledger.notes:
        lines.append(f"note: {n}")
    return "\n".join(lines) + "\n"


__all__ = [
    "MorseLedger", "ParityReport", "DegenerateRecordWarning", "CONTRACTIBLE_BETTI",
    "assemble_series", "build_ledger", "check_relations", "parity_check", "s_recursion",
    "one_plus_k_times", "first_negative", "format_ledger",
]
