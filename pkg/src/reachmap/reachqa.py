"""Object reachability pseudo-labels and templated reachability QA.

Template 1 is the canonical reach query; the other four are fixed
companions.  Answers are fixed strings per
template and label, so scoring can be a deterministic polarity match.
"""

from __future__ import annotations

import enum
import json
import logging
import random
import re
import string
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .spmap import PixelClass, SPMap

log = logging.getLogger(__name__)

DEFAULT_REACH_THRESHOLD = 0.5
DEFAULT_MIN_VALID = 0.2


@dataclass(frozen=True, eq=False)
class ObjectAnnotation:
    label: str
    bbox: tuple[int, int, int, int]  # x, y, w, h in pixels
    mask: np.ndarray | None = None  # (h, w) bool, relative to bbox

    def __post_init__(self):
        if not isinstance(self.label, str) or not self.label.strip():
            raise InvalidArgumentError("object label must be a non-empty string")
        bbox = tuple(int(v) for v in self.bbox)
        if len(bbox) != 4 or bbox[0] < 0 or bbox[1] < 0 or bbox[2] < 1 or bbox[3] < 1:
            raise InvalidArgumentError(f"bad bbox {self.bbox!r}")
        object.__setattr__(self, "bbox", bbox)
        if self.mask is not None:
            m = np.array(self.mask, dtype=bool)
            if m.shape != (bbox[3], bbox[2]):
                raise InvalidArgumentError(f"mask shape {m.shape} does not match bbox {bbox[2]}x{bbox[3]}")
            if not m.any():
                raise InvalidArgumentError("mask is empty")
            m.setflags(write=False)
            object.__setattr__(self, "mask", m)

    def region(self, height: int, width: int) -> np.ndarray:
        """Full-image boolean mask of the object's pixels."""
        x, y, w, h = self.bbox
        if x + w > width or y + h > height:
            raise InvalidArgumentError(f"bbox {self.bbox} exceeds {width}x{height} image")
        out = np.zeros((height, width), dtype=bool)
        out[y : y + h, x : x + w] = True if self.mask is None else self.mask
        return out


class Reach(enum.Enum):
    REACHABLE = "reachable"
    UNREACHABLE = "unreachable"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class ReachLabel:
    status: Reach
    support: float
    valid_fraction: float


@dataclass(frozen=True)
class LabelPolicy:
    reach_threshold: float = DEFAULT_REACH_THRESHOLD
    min_valid: float = DEFAULT_MIN_VALID

    def __post_init__(self):
        for name in ("reach_threshold", "min_valid"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1]")


def object_reachability(spmap: SPMap, ann: ObjectAnnotation, policy: LabelPolicy = LabelPolicy()) -> ReachLabel:
    region = ann.region(spmap.height, spmap.width)
    total = int(region.sum())
    reachable = int((region & spmap.mask(PixelClass.REACHABLE)).sum())
    valid = total - int((region & spmap.mask(PixelClass.INVALID)).sum())
    valid_fraction = valid / total
    support = reachable / valid if valid else 0.0
    if valid == 0 or valid_fraction < policy.min_valid:
        status = Reach.INDETERMINATE
    elif support >= policy.reach_threshold:
        status = Reach.REACHABLE
    else:
        status = Reach.UNREACHABLE
    return ReachLabel(status, support, valid_fraction)


# -- templates ------------------------------------------------------------------


@dataclass(frozen=True)
class Template:
    id: int
    question: str  # uses {object}, or {a} and {b} for the comparative one
    yes: str | None = None
    no: str | None = None
    # For yes/no templates: does "yes" mean the object is reachable?
    yes_means_reachable: bool = True

    @property
    def comparative(self) -> bool:
        return "{a}" in self.question

    def answer(self, reachable: bool, a: str | None = None, b: str | None = None) -> str:
        if self.comparative:
            return f"The {a if reachable else b} is reachable."
        return self.yes if reachable == self.yes_means_reachable else self.no

    def pattern(self) -> re.Pattern:
        parts = re.split(r"(\{\w+\})", self.question)
        rx = "".join(f"(?P<{p[1:-1]}>.+?)" if p.startswith("{") else re.escape(p) for p in parts)
        return re.compile(rf"\A{rx}\Z", re.DOTALL)


TEMPLATES: dict[int, Template] = {
    1: Template(1, "Is the {object} in the robot's reachable space?", "Yes, it is.", "No, it is not."),
    2: Template(
        2, "Is the {object} outside the robot's reachable space?", "Yes, it is.", "No, it is not.",
        yes_means_reachable=False,
    ),
    3: Template(3, "Which is reachable: {a} or {b}?"),
    4: Template(4, "Can the robot grasp the {object} from its current position?", "Yes, it can.", "No, it cannot."),
    5: Template(5, "Is the area around the {object} within reach?", "Yes, it is.", "No, it is not."),
}
ALL_TEMPLATE_IDS = tuple(sorted(TEMPLATES))


def parse_question(question: str) -> tuple[int, tuple[str, ...]]:
    """Recover ``(template id, object labels)`` from a generated question."""
    for tid in ALL_TEMPLATE_IDS:
        m = TEMPLATES[tid].pattern().match(question)
        if m:
            if TEMPLATES[tid].comparative:
                return tid, (m.group("a"), m.group("b"))
            return tid, (m.group("object"),)
    raise InvalidArgumentError(f"question matches no template: {question!r}")


@dataclass(frozen=True)
class QAPair:
    scene_id: str
    template_id: int
    object: str
    question: str
    answer: str
    label: str
    support: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "scene_id": self.scene_id,
                "template_id": self.template_id,
                "object": self.object,
                "question": self.question,
                "answer": self.answer,
                "label": self.label,
                "support": self.support,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "QAPair":
        d = json.loads(line)
        return cls(
            str(d["scene_id"]), int(d["template_id"]), d["object"], d["question"], d["answer"],
            d["label"], float(d["support"]),
        )


def generate_qa_pairs(
    scene_id: str,
    objects: Sequence[tuple[ObjectAnnotation, ReachLabel]],
    templates: Iterable[int] = ALL_TEMPLATE_IDS,
    seed: int = 0,
) -> list[QAPair]:
    """One pair per (object, template), ordered by object then template id.

    Indeterminate objects are skipped.  The comparative template pairs each
    object with a seeded choice among objects of the opposite label and is
    skipped when no such partner exists.
    """
    tids = sorted(set(int(t) for t in templates))
    if not tids:
        raise InvalidArgumentError("template set is empty")
    unknown = [t for t in tids if t not in TEMPLATES]
    if unknown:
        raise InvalidArgumentError(f"unknown template ids {unknown}")

    usable = []
    for ann, lab in objects:
        if lab.status is Reach.INDETERMINATE:
            log.warning("scene %s: skipping %r, reachability indeterminate", scene_id, ann.label)
            continue
        usable.append((ann, lab))

    rng = random.Random(f"{seed}:{scene_id}")
    pairs = []
    for ann, lab in usable:
        reachable = lab.status is Reach.REACHABLE
        for tid in tids:
            tpl = TEMPLATES[tid]
            if tpl.comparative:
                partners = sorted(
                    {o.label for o, l in usable if l.status is not lab.status and o.label != ann.label}
                )
                if not partners:
                    continue
                other = rng.choice(partners)
                question = tpl.question.format(a=ann.label, b=other)
                answer = tpl.answer(reachable, ann.label, other)
            else:
                question = tpl.question.format(object=ann.label)
                answer = tpl.answer(reachable)
            pairs.append(QAPair(scene_id, tid, ann.label, question, answer, lab.status.value, lab.support))
    return pairs


# -- scoring ----------------------------------------------------------------------

_PUNCT = str.maketrans("", "", string.punctuation + "’‘“”")


def normalize(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return " ".join(text.lower().translate(_PUNCT).split())


_COMPARATIVE_ANSWER = re.compile(r"\AThe (.+) is reachable\.\Z", re.DOTALL)


def _has_phrase(haystack: str, phrase: str) -> bool:
    return f" {phrase} " in f" {haystack} "


def polarity(text: str) -> bool | None:
    """``True`` for yes, ``False`` for no, ``None`` if absent or contradictory."""
    tokens = set(normalize(text).split())
    yes, no = "yes" in tokens, "no" in tokens
    if yes == no:
        return None
    return yes


def is_correct(pair: QAPair, response: str) -> bool:
    tpl = TEMPLATES[pair.template_id]
    if tpl.comparative:
        _, (a, b) = parse_question(pair.question)
        m = _COMPARATIVE_ANSWER.match(pair.answer)
        if m is None or m.group(1) not in (a, b):
            raise InvalidArgumentError(f"malformed comparative answer {pair.answer!r}")
        winner, loser = (a, b) if m.group(1) == a else (b, a)
        resp = normalize(response)
        return _has_phrase(resp, normalize(winner)) and not _has_phrase(resp, normalize(loser))
    expected = polarity(pair.answer)
    return expected is not None and polarity(response) == expected


@dataclass(frozen=True)
class ScoreReport:
    correct: tuple[bool, ...]
    accuracy: float
    per_template: dict[int, dict]

    def to_dict(self) -> dict:
        return {
            "n": len(self.correct),
            "accuracy": self.accuracy,
            "per_template": {str(k): v for k, v in sorted(self.per_template.items())},
            "correct": list(self.correct),
        }


def score_responses(pairs: Sequence[QAPair], responses: Sequence[str]) -> ScoreReport:
    if len(pairs) != len(responses):
        raise InvalidArgumentError(f"{len(pairs)} pairs but {len(responses)} responses")
    correct = tuple(is_correct(p, r) for p, r in zip(pairs, responses))
    by_tid = defaultdict(list)
    for p, c in zip(pairs, correct):
        by_tid[p.template_id].append(c)
    per_template = {
        tid: {"n": len(cs), "correct": sum(cs), "accuracy": sum(cs) / len(cs)} for tid, cs in by_tid.items()
    }
    accuracy = sum(correct) / len(correct) if correct else 0.0
    return ScoreReport(correct, accuracy, per_template)
