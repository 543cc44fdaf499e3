"""Prompt composition: single-view prompts for training, multi-view for generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .colors import ColorTable, map_category, map_subnet
from .packets import ProtocolKind, TraceDataset, int_to_ip

VIEW_ORDER = ("protocol", "subnet", "attack_type")

DEFAULT_GLOBAL_PROMPT = "network traffic image"
DEFAULT_TEMPLATES = {
    "protocol": ", protocol is {color} style",
    "subnet": ", subnet is {color} style",
    "attack_type": ", attack type is {color} style",
}


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class ViewCatalog:
    """The fixed view list with per-view category lists and prompt templates."""

    categories: Mapping[str, tuple[str, ...]]
    templates: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    global_prompt: str = DEFAULT_GLOBAL_PROMPT

    def __post_init__(self) -> None:
        for view in VIEW_ORDER:
            if view not in self.categories or not self.categories[view]:
                raise PromptError(f"view {view!r} has no categories")
            if self.templates.get(view, "").count("{color}") != 1:
                raise PromptError(f"template for {view!r} needs exactly one "
                                  "{color} slot")

    def category_index(self, view: str, category: str) -> int:
        try:
            return self.categories[view].index(category)
        except (KeyError, ValueError):
            raise PromptError(f"unknown category {category!r} for view {view!r}") \
                from None

    @classmethod
    def from_dataset(cls, dataset: TraceDataset,
                     templates: Optional[Mapping[str, str]] = None,
                     global_prompt: str = DEFAULT_GLOBAL_PROMPT) -> "ViewCatalog":
        """Catalog with the full protocol set and the observed subnets/labels."""
        subnets = sorted({int_to_ip(p.src_ip & 0xFFFFFF00) + "/24"
                          for p in dataset})
        labels = [a.name for a in dataset.attack_types()]
        return cls(
            categories={
                "protocol": tuple(p.name for p in
                                  (ProtocolKind.TCP, ProtocolKind.UDP,
                                   ProtocolKind.ICMP)),
                "subnet": tuple(subnets),
                "attack_type": tuple(labels),
            },
            templates=dict(templates) if templates else dict(DEFAULT_TEMPLATES),
            global_prompt=global_prompt,
        )


@dataclass(frozen=True)
class PromptSpec:
    """A composed prompt and where it came from."""

    text: str
    phase: str  # "train" | "generate"
    categories: tuple[tuple[str, str], ...]  # (view, category) pairs, view order

    def __post_init__(self) -> None:
        if self.phase == "train" and len(self.categories) != 1:
            raise PromptError("training prompts reference exactly one view")
        views = [v for v, _ in self.categories]
        if len(views) != len(set(views)):
            raise PromptError("at most one category per view")


def map_view_category(view: str, category: str, catalog: ViewCatalog,
                      table: ColorTable) -> str:
    """Color name for a category: nearest-color for subnets, evenly-spaced
    table picks for the other views."""
    if view == "subnet":
        return map_subnet(category, table)
    j = catalog.category_index(view, category)
    return map_category(len(catalog.categories[view]), j, table)


def _fragment(view: str, category: str, catalog: ViewCatalog,
              table: ColorTable) -> str:
    color = map_view_category(view, category, catalog, table)
    return catalog.templates[view].format(color=color)


def training_prompt(view: str, j: int, catalog: ViewCatalog,
                    table: ColorTable) -> PromptSpec:
    """Single-view prompt: global prompt + the view's color-instantiated template."""
    if view not in VIEW_ORDER:
        raise PromptError(f"unknown view {view!r}")
    category = catalog.categories[view][j]
    text = catalog.global_prompt + _fragment(view, category, catalog, table)
    return PromptSpec(text=text, phase="train", categories=((view, category),))


def generation_prompt(selected: Mapping[str, str] | Iterable[tuple[str, str]],
                      catalog: ViewCatalog, table: ColorTable) -> PromptSpec:
    """Multi-view prompt over a category subset, one per view, in view order."""
    items = list(selected.items()) if isinstance(selected, Mapping) else list(selected)
    if not items:
        raise PromptError("generation prompt needs at least one category")
    pairs: dict[str, str] = {}
    for view, category in items:
        if view not in VIEW_ORDER:
            raise PromptError(f"unknown view {view!r}")
        if view in pairs:
            raise PromptError(f"two categories selected for view {view!r}")
        pairs[view] = category
    ordered = tuple((v, pairs[v]) for v in VIEW_ORDER if v in pairs)
    text = catalog.global_prompt + "".join(
        _fragment(view, category, catalog, table) for view, category in ordered)
    return PromptSpec(text=text, phase="generate", categories=ordered)
