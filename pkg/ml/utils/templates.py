"""Handcrafted prompt templates with a learnable [CLASS] slot.

At this scale there is no text encoder, so a template only names the context
words and the initializer word; both are carried into reports as metadata.
"""

from dataclasses import dataclass

from app.utils.errors import DataError

__all__ = ["PLACEHOLDER", "PromptTemplate", "TEMPLATES", "resolve_template"]

PLACEHOLDER = "[CLASS]"


@dataclass(frozen=True)
class PromptTemplate:
    dataset: str
    template: str
    initializer: str
    concept: str = ""

    def __post_init__(self):
        if self.template.count(PLACEHOLDER) != 1:
            raise ValueError(f"Template must contain {PLACEHOLDER} exactly once: {self.template!r}")

    def render(self, class_name: str) -> str:
        return self.template.replace(PLACEHOLDER, class_name)


TEMPLATES = {
    t.dataset: t
    for t in (
        PromptTemplate("StanfordCars", "A photo of [CLASS], a type of car.", "car", "Vehicular variants"),
        PromptTemplate("Cornseeds", "A photo of [CLASS] corn seed.", "seed", "Natural images, agriculture"),
        PromptTemplate("CRC5k", "[CLASS] tissue.", "tissue", "Histopathology"),
        PromptTemplate("ISIC2018", "[CLASS] skin lesion.", "skin", "Dermatology"),
        PromptTemplate("LC25000", "[CLASS] tissue.", "tissue", "Histopathology"),
        PromptTemplate("Fractals", "[CLASS] fractal.", "fractal", "Abstract imagery"),
    )
}


def resolve_template(dataset_name: str) -> PromptTemplate:
    try:
        return TEMPLATES[dataset_name]
    except KeyError:
        known = ", ".join(sorted(TEMPLATES))
        raise DataError(f"Unknown dataset '{dataset_name}'. Known datasets: {known}") from None
