"""JSON-lines operator files.

One record per ladder string::

    {"sites": [[0], [1]], "letters": ["+", "-"], "re": 0.5, "im": 0}

Floats are written with 17 significant digits so that parse/serialize is
exact. When a string lives on a larger support than its own sites (identity
letters are never written) the record carries an extra ``"support"`` list.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .pauli_algebra import ExtensiveOperator, LETTERS, Support, as_site

_CODE = {ch: i for i, ch in enumerate(LETTERS)}


class OperatorFormatError(ValueError):
    """Malformed or non-canonical operator record."""


def _num(x: float) -> str:
    text = f"{x + 0.0:.17g}"  # + 0.0 turns -0.0 into 0.0
    if text in ("nan", "inf", "-inf"):
        raise OperatorFormatError(f"non-finite coefficient {x}")
    return text


def _sites_json(sites) -> str:
    return "[" + ", ".join("[" + ", ".join(str(c) for c in s) + "]" for s in sites) + "]"


def dumps(op: ExtensiveOperator) -> str:
    lines = []
    for support, coeffs in op.items():
        k = len(support)
        for code in np.flatnonzero(coeffs):
            code = int(code)
            sites, letters = [], []
            for j in range(k):
                digit = (code >> (2 * (k - 1 - j))) & 3
                if digit:
                    sites.append(support[j])
                    letters.append(LETTERS[digit])
            c = complex(coeffs[code])
            rec = '{"sites": ' + _sites_json(sites)
            rec += ', "letters": [' + ", ".join(f'"{ch}"' for ch in letters) + "]"
            if tuple(sites) != support:
                rec += ', "support": ' + _sites_json(support)
            rec += f', "re": {_num(c.real)}, "im": {_num(c.imag)}' + "}"
            lines.append(rec)
    return "".join(line + "\n" for line in lines)


def loads(text: str) -> ExtensiveOperator:
    acc: dict[Support, np.ndarray] = {}
    seen: dict[tuple, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            sites = [as_site(s) for s in rec["sites"]]
            letters = list(rec["letters"])
            coeff = complex(float(rec["re"]), float(rec["im"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise OperatorFormatError(f"record {lineno}: malformed ({exc})") from None
        if len(sites) != len(letters):
            raise OperatorFormatError(f"record {lineno}: {len(sites)} sites but {len(letters)} letters")
        if len(set(sites)) != len(sites):
            raise OperatorFormatError(f"record {lineno}: repeated site")
        bad = [ch for ch in letters if ch not in ("+", "-", "Z")]
        if bad:
            raise OperatorFormatError(f"record {lineno}: invalid letter {bad[0]!r}")
        pairs = dict(zip(sites, letters))
        support = tuple(sorted(as_site(s) for s in rec.get("support", sites)))
        if not set(sites) <= set(support):
            raise OperatorFormatError(f"record {lineno}: sites outside declared support")
        code = 0
        for s in support:
            code = (code << 2) | _CODE[pairs.get(s, "I")]
        key = (support, code)
        if key in seen:
            raise OperatorFormatError(
                f"record {lineno}: duplicate string (first seen in record {seen[key]})"
            )
        seen[key] = lineno
        vec = acc.setdefault(support, np.zeros(4 ** len(support), dtype=np.complex128))
        vec[code] = coeff
    return ExtensiveOperator(acc)


def write_operator(path, op: ExtensiveOperator) -> None:
    Path(path).write_text(dumps(op))


def read_operator(path) -> ExtensiveOperator:
    return loads(Path(path).read_text())
