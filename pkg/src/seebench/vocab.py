"""Attribute vocabulary shared by the catalog and the prompt factory."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

SLOTS: tuple[str, ...] = ("size", "color", "material")


@dataclass(frozen=True)
class AttributeVocabulary:
    size: tuple[str, ...] = ("small", "medium", "large")
    color: tuple[str, ...] = ("red", "green", "blue")
    material: tuple[str, ...] = ("wooden", "rubber", "metallic")
    _slot_of: dict[str, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        slot_of: dict[str, str] = {}
        for slot in SLOTS:
            values = tuple(getattr(self, slot))
            object.__setattr__(self, slot, values)
            if len(values) != 3 or len(set(values)) != 3:
                raise ValueError(f"slot {slot!r} needs exactly 3 distinct values, got {values!r}")
            for v in values:
                if not v or v != v.lower() or "-" in v or v != v.strip():
                    raise ValueError(f"bad attribute value {v!r} in slot {slot!r}")
                if v in slot_of:
                    raise ValueError(f"attribute value {v!r} appears in more than one slot")
                slot_of[v] = slot
        object.__setattr__(self, "_slot_of", slot_of)

    def values(self, slot: str) -> tuple[str, ...]:
        return getattr(self, slot)

    def flat(self) -> list[tuple[str, str]]:
        """All (slot, value) pairs: sizes, then colors, then materials."""
        return [(slot, v) for slot in SLOTS for v in self.values(slot)]

    def slot_of(self, value: str) -> str | None:
        return self._slot_of.get(value)

    def combinations(self) -> list[dict[str, str]]:
        """Every non-empty attribute map, ordered by arity then vocabulary order.

        At most one value per slot; this yields 9 + 27 + 27 = 63 maps.
        """
        out: list[dict[str, str]] = []
        flat = self.flat()
        for arity in range(1, len(SLOTS) + 1):
            for combo in combinations(flat, arity):
                slots = [s for s, _ in combo]
                if len(set(slots)) == arity:
                    out.append(dict(combo))
        return out

    def phrase(self, attributes: dict[str, str], name: str) -> str:
        """Render ``attributes`` before ``name`` in size, color, material order."""
        words = [attributes[s] for s in SLOTS if attributes.get(s)]
        return " ".join([*words, name])

    def as_dict(self) -> dict[str, list[str]]:
        return {slot: list(self.values(slot)) for slot in SLOTS}


DEFAULT_VOCAB = AttributeVocabulary()
