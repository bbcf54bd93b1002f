"""Caption parsing into region tags and control-sentence construction.

The class set is the closed vocabulary the region tagger scores; captions
are parsed into a subject tag set (the described object's own words) and an
object tag set (remaining class words, e.g. a relation partner's words).
Control sentences are built from tag words with Bernoulli dropout, a shuffle,
and a [SEP] terminal.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import world

SEP_TOKEN = "[SEP]"


@dataclass(frozen=True)
class ClassSet:
    words: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.words)) != len(self.words):
            raise ValueError("class set contains duplicate words")
        if not self.words:
            raise ValueError("class set is empty")

    @property
    def index(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.words) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ClassSet":
        words = [w for w in Path(path).read_text(encoding="utf-8").splitlines() if w]
        return cls(tuple(words))


@dataclass(frozen=True)
class TagSets:
    subject: frozenset[str]
    object: frozenset[str]

    def __post_init__(self):
        if self.subject & self.object:
            raise ValueError("subject and object tag sets must be disjoint")

    def all_words(self) -> frozenset[str]:
        return self.subject | self.object


@dataclass(frozen=True)
class ControlSentence:
    tokens: tuple[str, ...]
    source: str  # "self" | "interactive" | "gold-dropout"

    def words(self) -> tuple[str, ...]:
        return tuple(t for t in self.tokens if t != SEP_TOKEN)


@dataclass(frozen=True)
class GrammarConfig:
    shapes: tuple[str, ...] = world.SHAPES
    colors: tuple[str, ...] = world.COLORS
    sizes: tuple[str, ...] = world.SIZES
    rare_textures: tuple[str, ...] = world.RARE_TEXTURES
    relation_words: tuple[str, ...] = world.RELATION_WORDS


def build_class_set(grammar: Optional[GrammarConfig] = None) -> ClassSet:
    """Class set over the grammar enums, sorted lexicographically."""
    grammar = grammar or GrammarConfig()
    words = (
        list(grammar.shapes)
        + list(grammar.colors)
        + list(grammar.sizes)
        + list(grammar.rare_textures)
        + list(grammar.relation_words)
    )
    if not words:
        raise ValueError("grammar has no vocabulary")
    if len(set(words)) != len(words):
        raise ValueError("grammar enums contain duplicate words")
    return ClassSet(tuple(sorted(words)))


def _split_at_first_shape(
    class_words: Sequence[str], shapes: Iterable[str]
) -> tuple[set[str], set[str]]:
    shapes = set(shapes)
    subject: set[str] = set()
    boundary = None
    for i, word in enumerate(class_words):
        subject.add(word)
        if word in shapes:
            boundary = i
            break
    if boundary is None:
        # No shape word: everything is subject-side.
        return set(class_words), set()
    rest = set(class_words[boundary + 1 :]) - subject
    return subject, rest


def parse_caption(
    caption: Sequence[str],
    class_set: ClassSet,
    template_id: Optional[str] = None,
    grammar: Optional[GrammarConfig] = None,
) -> TagSets:
    """Extract class-set words and split them into subject/object tag sets.

    With template_id the split follows the template structure exactly; for
    free text the subject set is the class words up to and including the
    first shape word. On grammar captions the two coincide.
    """
    grammar = grammar or GrammarConfig()
    class_words = [w for w in caption if w in class_set]
    if template_id in ("T0", "T1"):
        return TagSets(frozenset(class_words), frozenset())
    if template_id == "T2":
        subject = set(class_words[:2])
        rest = set(class_words[2:]) - subject
        return TagSets(frozenset(subject), frozenset(rest))
    subject, rest = _split_at_first_shape(class_words, grammar.shapes)
    return TagSets(frozenset(subject), frozenset(rest))


def first_noun(caption: Sequence[str], class_set: ClassSet) -> Optional[str]:
    """First shape word (the grammar's noun category) in the caption."""
    for word in caption:
        if word in world.SHAPES and word in class_set:
            return word
    return None


def make_control_sentence(
    words: Sequence[str],
    rng: np.random.Generator,
    keep_prob: float,
    source: str = "gold-dropout",
) -> ControlSentence:
    """Bernoulli-drop words, shuffle the survivors, and append [SEP].

    An empty survivor set yields an empty token list; the control embedder's
    memory unit covers that case downstream.
    """
    if not 0.0 <= keep_prob <= 1.0:
        raise ValueError("keep_prob must lie in [0, 1]")
    survivors = [w for w in words if rng.random() < keep_prob]
    order = rng.permutation(len(survivors))
    shuffled = [survivors[i] for i in order]
    if shuffled:
        shuffled.append(SEP_TOKEN)
    return ControlSentence(tuple(shuffled), source)


def plain_control_sentence(words: Sequence[str], source: str) -> ControlSentence:
    """Deterministic inference-time sentence: given order plus [SEP]."""
    tokens = list(words)
    if tokens:
        tokens.append(SEP_TOKEN)
    return ControlSentence(tuple(tokens), source)


def ordered_tag_words(tags: TagSets, class_set: ClassSet) -> list[str]:
    """Subject then object words, each in class-index order."""
    idx = class_set.index
    return sorted(tags.subject, key=idx.__getitem__) + sorted(
        tags.object, key=idx.__getitem__
    )
