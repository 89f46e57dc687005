"""Stub logit tables.

Reads the declarative toy-model file format shared with the decoding
engine's in-process table backend:

    {"vocab": [str], "mode": "position" | "pattern",
     "tables": {"cond" | "prior": {key: [float]}},
     "default_logits": [float]}

Position mode keys rows by "0", "1", ...; pattern mode by
"<position>|<mask pattern>" where the pattern marks masked slots with M and
committed slots with a dot. Unkeyed states fall back to default_logits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

_CONDITIONS = ("cond", "prior")


class StubTableError(ValueError):
    """Malformed stub table file; startup must fail with nonzero exit."""


def _finite_row(row, where: str) -> tuple[float, ...]:
    try:
        values = tuple(float(x) for x in row)
    except (TypeError, ValueError) as exc:
        raise StubTableError(f"{where}: non-numeric entry") from exc
    if not all(math.isfinite(x) for x in values):
        raise StubTableError(f"{where}: non-finite entry")
    return values


@dataclass(frozen=True)
class StubTable:
    vocab: tuple[str, ...]
    mode: str
    tables: dict = field(default_factory=dict)
    default_logits: tuple[float, ...] = ()
    model_id: str = "stub-table"
    logit_kind: str = "raw"

    def __post_init__(self):
        if self.mode not in ("position", "pattern"):
            raise StubTableError(f"mode must be 'position' or 'pattern', got {self.mode!r}")
        if len(self.vocab) < 2:
            raise StubTableError("vocab needs at least 2 tokens")
        v = len(self.vocab)
        if len(self.default_logits) != v:
            raise StubTableError(
                f"default_logits has length {len(self.default_logits)}, expected {v}"
            )
        for condition, rows in self.tables.items():
            if condition not in _CONDITIONS:
                raise StubTableError(f"unknown table condition {condition!r}")
            for key, row in rows.items():
                if len(row) != v:
                    raise StubTableError(
                        f"table row {condition}/{key} has length {len(row)}, expected {v}"
                    )

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def row(self, conditioned: bool, position: int, masked: list[bool]) -> tuple[float, ...]:
        rows = self.tables.get("cond" if conditioned else "prior", {})
        if self.mode == "position":
            key = str(position)
        else:
            key = f"{position}|{''.join('M' if m else '.' for m in masked)}"
        row = rows.get(key)
        return tuple(row) if row is not None else self.default_logits

    def logits_for(self, tokens: list[int], masked: list[bool], conditioned: bool):
        return [list(self.row(conditioned, pos, masked)) for pos, m in enumerate(masked) if m]


def load_stub_table(path) -> StubTable:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise StubTableError(f"cannot read stub table {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise StubTableError(f"stub table {path} is not valid JSON: {exc.msg}") from exc
    try:
        vocab = tuple(str(t) for t in raw["vocab"])
        mode = raw["mode"]
        tables = {
            condition: {
                key: _finite_row(row, f"table row {condition}/{key}")
                for key, row in rows.items()
            }
            for condition, rows in raw.get("tables", {}).items()
        }
        default = _finite_row(raw["default_logits"], "default_logits")
    except KeyError as exc:
        raise StubTableError(f"stub table missing field {exc}") from exc
    return StubTable(vocab=vocab, mode=mode, tables=tables, default_logits=default)
