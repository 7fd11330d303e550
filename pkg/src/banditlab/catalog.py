"""Item catalog: K arms, each with a fixed ordered list of items.

The ordering is immutable for a study, so the j-th pull of an arm always
shows the same item. Each item carries the expected integer answer to its
attention-check question; that key never leaves the server.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import CatalogError


@dataclass(frozen=True)
class CatalogItem:
    item_id: str
    attention_key: int
    attention_question: str = "How many unique characters (with a face and/or body) appear?"
    title: str = ""
    content_url: str = ""
    metadata: dict = field(default_factory=dict)


@dataclass
class Catalog:
    arm_labels: list[str]
    items: list[list[CatalogItem]]  # items[k-1][j-1] is arm k's j-th item

    @property
    def K(self) -> int:
        return len(self.items)

    def arm_length(self, k: int) -> int:
        return len(self.items[k - 1])

    @property
    def min_arm_length(self) -> int:
        return min(len(arm) for arm in self.items)

    def item(self, k: int, j: int) -> CatalogItem:
        if not (1 <= k <= self.K):
            raise CatalogError(f"arm {k} outside [1, {self.K}]")
        if not (1 <= j <= self.arm_length(k)):
            raise CatalogError(f"arm {k} has {self.arm_length(k)} items, requested #{j}")
        return self.items[k - 1][j - 1]

    def all_items(self) -> list[CatalogItem]:
        return [it for arm in self.items for it in arm]

    def find(self, item_id: str) -> Optional[CatalogItem]:
        for arm in self.items:
            for it in arm:
                if it.item_id == item_id:
                    return it
        return None

    def validate(self) -> None:
        if self.K < 2:
            raise CatalogError("catalog needs at least 2 arms")
        if len(self.arm_labels) != self.K:
            raise CatalogError("arm_labels length must equal the number of arms")
        seen: set[str] = set()
        for arm in self.items:
            if not arm:
                raise CatalogError("every arm needs at least one item")
            for it in arm:
                if it.item_id in seen:
                    raise CatalogError(f"duplicate item_id {it.item_id!r}")
                seen.add(it.item_id)


def catalog_to_dict(catalog: Catalog) -> dict:
    return {
        "K": catalog.K,
        "arms": [
            {
                "arm": k + 1,
                "label": catalog.arm_labels[k],
                "items": [
                    {
                        "item_id": it.item_id,
                        "attention_key": it.attention_key,
                        "attention_question": it.attention_question,
                        "title": it.title,
                        "content_url": it.content_url,
                        "metadata": it.metadata,
                    }
                    for it in catalog.items[k]
                ],
            }
            for k in range(catalog.K)
        ],
    }


def catalog_from_dict(doc: dict) -> Catalog:
    try:
        arms = sorted(doc["arms"], key=lambda a: a["arm"])
        labels = [a.get("label", f"arm{a['arm']}") for a in arms]
        items = [
            [
                CatalogItem(
                    item_id=str(it["item_id"]),
                    attention_key=int(it["attention_key"]),
                    attention_question=it.get("attention_question", CatalogItem.attention_question),
                    title=it.get("title", ""),
                    content_url=it.get("content_url", ""),
                    metadata=it.get("metadata", {}),
                )
                for it in a["items"]
            ]
            for a in arms
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise CatalogError(f"malformed catalog document: {exc}") from exc
    catalog = Catalog(arm_labels=labels, items=items)
    catalog.validate()
    return catalog


def load_catalog(path: str | Path) -> Catalog:
    with open(path) as fh:
        return catalog_from_dict(json.load(fh))


def save_catalog(catalog: Catalog, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(catalog_to_dict(catalog), fh, indent=2)


def make_synthetic_catalog(
    K: int,
    per_arm: int,
    arm_labels: Optional[list[str]] = None,
    key_levels: int = 4,
) -> Catalog:
    """Deterministic placeholder catalog for simulations and tests."""
    labels = arm_labels or [f"arm{k}" for k in range(1, K + 1)]
    items = [
        [
            CatalogItem(
                item_id=f"a{k:02d}-i{j:03d}",
                attention_key=((k + j) % key_levels) + 1,
                title=f"{labels[k - 1]} item {j}",
            )
            for j in range(1, per_arm + 1)
        ]
        for k in range(1, K + 1)
    ]
    catalog = Catalog(arm_labels=labels, items=items)
    catalog.validate()
    return catalog
