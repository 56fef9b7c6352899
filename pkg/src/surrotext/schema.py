"""Typed attribute schemas and one-hot encoding for baseline models.

A schema is an ordered list of attribute specs; a system configuration is a
plain ``dict`` validated against it. The one-hot encoder follows the
scikit-learn transformer protocol so baseline pipelines compose with the
wider ecosystem; numeric attributes are z-scored with means and standard
deviations learned at fit time, categoricals expand to indicator blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import ContractViolation


class SchemaError(ValueError):
    """A value set does not validate against its schema."""


class EncodingError(ValueError):
    """A value cannot be represented under the fitted encoding."""


CATEGORICAL = "categorical"
NUMERIC = "numeric"
INTEGER = "integer"


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str
    categories: tuple[str, ...] = ()
    low: Optional[float] = None
    high: Optional[float] = None
    units: str = ""

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, NUMERIC, INTEGER):
            raise SchemaError(f"unknown attribute kind {self.kind!r} for {self.name!r}")
        if self.kind == CATEGORICAL and not self.categories:
            raise SchemaError(f"categorical attribute {self.name!r} needs categories")

    def check(self, value) -> None:
        if self.kind == CATEGORICAL:
            if value not in self.categories:
                raise SchemaError(
                    f"{self.name}: {value!r} is not one of {list(self.categories)}")
            return
        if self.kind == INTEGER and (isinstance(value, bool) or
                                     not float(value).is_integer()):
            raise SchemaError(f"{self.name}: expected an integer, got {value!r}")
        try:
            number = float(value)
        except (TypeError, ValueError):
            raise SchemaError(f"{self.name}: expected a number, got {value!r}") from None
        if self.low is not None and number < self.low:
            raise SchemaError(f"{self.name}: {number} below minimum {self.low}")
        if self.high is not None and number > self.high:
            raise SchemaError(f"{self.name}: {number} above maximum {self.high}")


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered attribute specification for one simulator family."""

    name: str
    specs: tuple[AttributeSpec, ...]
    version: int = 1
    extra_rules: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate attribute names in schema {self.name!r}")

    @property
    def attribute_names(self) -> list[str]:
        return [s.name for s in self.specs]

    def spec(self, name: str) -> AttributeSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise SchemaError(f"schema {self.name!r} has no attribute {name!r}")

    def validate(self, values: Mapping) -> None:
        missing = [s.name for s in self.specs if s.name not in values]
        if missing:
            raise SchemaError(f"missing attributes for schema {self.name!r}: {missing}")
        unknown = [k for k in values if k not in self.attribute_names]
        if unknown:
            raise SchemaError(f"unknown attributes for schema {self.name!r}: {unknown}")
        for s in self.specs:
            s.check(values[s.name])
        self._check_cross_rules(values)

    def _check_cross_rules(self, values: Mapping) -> None:
        for rule in self.extra_rules:
            lhs, op, rhs = rule.split()
            a, b = float(values[lhs]), float(values[rhs])
            ok = a < b if op == "<" else a > b
            if not ok:
                raise SchemaError(f"schema rule violated: {lhs} {op} {rhs} "
                                  f"(got {a} vs {b})")

    def to_json(self) -> str:
        doc = {
            "schema": self.name,
            "version": self.version,
            "rules": list(self.extra_rules),
            "attributes": [
                {
                    "name": s.name,
                    "kind": s.kind,
                    "categories": list(s.categories),
                    "low": s.low,
                    "high": s.high,
                    "units": s.units,
                }
                for s in self.specs
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AttributeSchema":
        doc = json.loads(text)
        specs = tuple(
            AttributeSpec(
                name=a["name"], kind=a["kind"],
                categories=tuple(a.get("categories") or ()),
                low=a.get("low"), high=a.get("high"), units=a.get("units", ""),
            )
            for a in doc["attributes"]
        )
        return cls(name=doc["schema"], specs=specs, version=doc.get("version", 1),
                   extra_rules=tuple(doc.get("rules", ())))

    def subset(self, names: Iterable[str]) -> "AttributeSchema":
        keep = set(names)
        specs = tuple(s for s in self.specs if s.name in keep)
        rules = tuple(r for r in self.extra_rules
                      if {r.split()[0], r.split()[2]} <= keep)
        return AttributeSchema(name=self.name, specs=specs, version=self.version,
                               extra_rules=rules)


class OneHotAttributeEncoder(TransformerMixin, BaseEstimator):
    """Fixed-layout one-hot encoding of attribute dicts.

    Categorical attributes expand to indicator blocks in schema order;
    numeric and integer attributes occupy one slot each, z-scored with the
    mean and standard deviation seen at fit time. ``inverse_transform``
    recovers categorical values exactly and numerics up to float precision.
    """

    def __init__(self, schema: AttributeSchema, attributes: Optional[Sequence[str]] = None):
        self.schema = schema
        self.attributes = attributes

    def fit(self, X: Sequence[Mapping], y=None) -> "OneHotAttributeEncoder":
        names = list(self.attributes) if self.attributes else self.schema.attribute_names
        self.attribute_names_ = names
        self.slots_ = {}
        offset = 0
        for name in names:
            spec = self.schema.spec(name)
            width = len(spec.categories) if spec.kind == CATEGORICAL else 1
            self.slots_[name] = (offset, width)
            offset += width
        self.width_ = offset
        self.means_, self.stds_ = {}, {}
        for name in names:
            spec = self.schema.spec(name)
            if spec.kind != CATEGORICAL:
                column = np.array([float(row[name]) for row in X])
                if column.size == 0:
                    raise ContractViolation("cannot fit encoder on an empty dataset")
                self.means_[name] = float(column.mean())
                self.stds_[name] = float(column.std()) or 1.0
        return self

    def transform(self, X: Sequence[Mapping]) -> np.ndarray:
        out = np.zeros((len(X), self.width_))
        for i, row in enumerate(X):
            out[i] = self.encode_one(row)
        return out

    def encode_one(self, values: Mapping) -> np.ndarray:
        vec = np.zeros(self.width_)
        for name in self.attribute_names_:
            spec = self.schema.spec(name)
            offset, width = self.slots_[name]
            value = values[name]
            if spec.kind == CATEGORICAL:
                if value not in spec.categories:
                    raise EncodingError(f"attribute {name!r}: unknown category {value!r}")
                vec[offset + spec.categories.index(value)] = 1.0
            else:
                vec[offset] = (float(value) - self.means_[name]) / self.stds_[name]
        return vec

    def inverse_transform(self, X: np.ndarray) -> list[dict]:
        rows = []
        for vec in np.atleast_2d(X):
            values = {}
            for name in self.attribute_names_:
                spec = self.schema.spec(name)
                offset, width = self.slots_[name]
                if spec.kind == CATEGORICAL:
                    values[name] = spec.categories[int(np.argmax(vec[offset:offset + width]))]
                else:
                    raw = vec[offset] * self.stds_[name] + self.means_[name]
                    values[name] = int(round(raw)) if spec.kind == INTEGER else raw
            rows.append(values)
        return rows


def encode_onehot(values: Mapping, encoder: OneHotAttributeEncoder) -> np.ndarray:
    """Functional wrapper kept for symmetry with the caption renderers."""
    if set(values) == set(encoder.schema.attribute_names):
        encoder.schema.validate(values)
    return encoder.encode_one(values)
