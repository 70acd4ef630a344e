"""Statistical queries as serializable data.

A query maps alphabet symbols to [0,1]; on a dataset it evaluates to the
per-element average, and on a measure to the expectation of that average.
Queries are plain descriptors rather than opaque callables so that game
transcripts have value semantics: they can be written to JSON, replayed,
and counted.

Descriptor kinds:

* ``table``      explicit value per symbol (small alphabets only),
* ``threshold``  1 for symbol index < cutoff, else 0,
* ``sign``       seeded-hash {0,1} query, evaluable lazily on any alphabet,
* ``singleton``  indicator of one symbol,
* ``negate``     1 - inner query,
* ``sign_aggregate``  thresholded signed sum of sign queries (the adaptive
  attacker's final query; determined by seeds and a sign vector).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ValidationError
from .seeding import hash_bits

_CHUNK = 256  # sign_aggregate accumulation block, bounds peak memory


@dataclass(frozen=True)
class StatisticalQuery:
    """A symbol -> [0,1] map given by a serializable descriptor."""

    kind: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "table":
            vals = np.asarray(self.payload["values"], dtype=float)
            if vals.ndim != 1 or vals.size == 0:
                raise ValidationError("table query needs a 1-d value list")
            if np.any(vals < 0) or np.any(vals > 1):
                raise ValidationError("table query values must lie in [0,1]")
        elif self.kind == "threshold":
            int(self.payload["cutoff"])
        elif self.kind == "sign":
            int(self.payload["seed"])
        elif self.kind == "singleton":
            int(self.payload["symbol"])
        elif self.kind == "negate":
            if not isinstance(self.payload["inner"], StatisticalQuery):
                raise ValidationError("negate wraps a StatisticalQuery")
        elif self.kind == "sign_aggregate":
            seeds = self.payload["seeds"]
            signs = self.payload["signs"]
            if len(seeds) != len(signs):
                raise ValidationError("sign_aggregate needs one sign per seed")
        else:
            raise ValidationError(f"unknown query kind {self.kind!r}")

    # -- evaluation ----------------------------------------------------------
    def values(self, symbols) -> np.ndarray:
        """Evaluate the query on an array of symbol indices."""
        sym = np.asarray(symbols)
        if self.kind == "table":
            return np.asarray(self.payload["values"], dtype=float)[sym]
        if self.kind == "threshold":
            return (sym < int(self.payload["cutoff"])).astype(float)
        if self.kind == "sign":
            return hash_bits(int(self.payload["seed"]), sym).astype(float)
        if self.kind == "singleton":
            return (sym == int(self.payload["symbol"])).astype(float)
        if self.kind == "negate":
            return 1.0 - self.payload["inner"].values(sym)
        # sign_aggregate: 1 if sum_j s_j * (bit_j(x) - 1/2) > 0
        agg = self._aggregate(sym)
        return (agg > 0).astype(float)

    def _aggregate(self, sym: np.ndarray) -> np.ndarray:
        seeds = self.payload["seeds"]
        signs = np.asarray(self.payload["signs"], dtype=float)
        agg = np.zeros(sym.shape, dtype=float)
        for start in range(0, len(seeds), _CHUNK):
            block = [
                hash_bits(int(s), sym).astype(float) - 0.5
                for s in seeds[start : start + _CHUNK]
            ]
            agg += np.tensordot(signs[start : start + _CHUNK], np.stack(block), axes=(0, 0))
        return agg

    def on_dataset(self, dataset) -> float:
        """Empirical average q(S) = mean over the tuple's elements."""
        return float(np.mean(self.values(dataset)))

    def grid_average(self, alphabet_size: int) -> float:
        """Mean of the query over a uniform symbol; exact, O(1) where possible."""
        m = int(alphabet_size)
        if self.kind == "table":
            vals = np.asarray(self.payload["values"], dtype=float)
            if vals.size != m:
                raise ValidationError("table query size mismatch with alphabet")
            return float(vals.mean())
        if self.kind == "threshold":
            return min(max(int(self.payload["cutoff"]), 0), m) / m
        if self.kind == "singleton":
            return (1.0 / m) if 0 <= int(self.payload["symbol"]) < m else 0.0
        if self.kind == "negate":
            return 1.0 - self.payload["inner"].grid_average(m)
        return float(np.mean(self.values(np.arange(m, dtype=np.uint64))))

    # -- structure -----------------------------------------------------------
    @property
    def is_predicate(self) -> bool:
        """True when the query is {0,1}-valued by construction."""
        if self.kind == "table":
            vals = np.asarray(self.payload["values"], dtype=float)
            return bool(np.all((vals == 0.0) | (vals == 1.0)))
        if self.kind == "negate":
            return self.payload["inner"].is_predicate
        return True

    def negate(self) -> "StatisticalQuery":
        """The complement query 1 - q (a predicate stays a predicate)."""
        if self.kind == "negate":
            return self.payload["inner"]
        return StatisticalQuery("negate", {"inner": self})

    # -- serialization -------------------------------------------------------
    def to_json(self) -> dict[str, Any]:
        if self.kind == "table":
            return {"kind": "table", "values": [float(v) for v in self.payload["values"]]}
        if self.kind == "threshold":
            return {"kind": "threshold", "cutoff": int(self.payload["cutoff"])}
        if self.kind == "sign":
            return {"kind": "sign", "seed": int(self.payload["seed"])}
        if self.kind == "singleton":
            return {"kind": "singleton", "symbol": int(self.payload["symbol"])}
        if self.kind == "negate":
            return {"kind": "negate", "inner": self.payload["inner"].to_json()}
        return {
            "kind": "sign_aggregate",
            "seeds": [int(s) for s in self.payload["seeds"]],
            "signs": [int(s) for s in self.payload["signs"]],
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "StatisticalQuery":
        kind = obj["kind"]
        if kind == "table":
            return table_query(obj["values"])
        if kind == "threshold":
            return threshold_query(obj["cutoff"])
        if kind == "sign":
            return sign_query(obj["seed"])
        if kind == "singleton":
            return singleton_query(obj["symbol"])
        if kind == "negate":
            return StatisticalQuery.from_json(obj["inner"]).negate()
        if kind == "sign_aggregate":
            return sign_aggregate_query(obj["seeds"], obj["signs"])
        raise ValidationError(f"unknown query kind {kind!r}")


def table_query(values) -> StatisticalQuery:
    return StatisticalQuery("table", {"values": tuple(float(v) for v in values)})


def threshold_query(cutoff: int) -> StatisticalQuery:
    return StatisticalQuery("threshold", {"cutoff": int(cutoff)})


def sign_query(seed: int) -> StatisticalQuery:
    return StatisticalQuery("sign", {"seed": int(seed)})


def singleton_query(symbol: int) -> StatisticalQuery:
    return StatisticalQuery("singleton", {"symbol": int(symbol)})


def zero_query() -> StatisticalQuery:
    """The all-zero query (threshold below the smallest symbol)."""
    return threshold_query(0)


def sign_aggregate_query(seeds, signs) -> StatisticalQuery:
    return StatisticalQuery(
        "sign_aggregate",
        {"seeds": tuple(int(s) for s in seeds), "signs": tuple(int(s) for s in signs)},
    )
