"""Training-sample construction and test QA generation for synthetic scenarios.

Four training-sample kinds: positive recognition (5 QA per training image),
random recognition (external distractor images, one QA each), joint recognition
(cross-concept negatives, at least m*(m-1)*n samples), and conversation
(attribute QA rendered from scenario metadata, image attached).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .model import SequenceBatch, SoftToken
from .scenario import ConceptSpec, Scenario
from .token_init import ConceptTokenBlock
from .tokenizer import EOS_ID, Vocabulary

KIND_POSITIVE = "positive_rec"
KIND_RANDOM = "random_rec"
KIND_JOINT = "joint_rec"
KIND_CONVERSATION = "conversation"

ANSWER_FORMAT = "Answer with a single word: Yes or No."

POSITIVE_TEMPLATES = [
    "Can you see {c} in this photo? " + ANSWER_FORMAT,
    "Is {c} visible in this image? " + ANSWER_FORMAT,
    "Does this picture show {c}? " + ANSWER_FORMAT,
    "Is {c} somewhere in this photo? " + ANSWER_FORMAT,
    "Can you spot {c} in this image? " + ANSWER_FORMAT,
    "Does {c} appear in this picture? " + ANSWER_FORMAT,
    "Is there any sign of {c} in this photo? " + ANSWER_FORMAT,
    "Would you say {c} is in this image? " + ANSWER_FORMAT,
    "Is {c} present in this picture? " + ANSWER_FORMAT,
    "Can you find {c} in this photo? " + ANSWER_FORMAT,
]

NEGATIVE_TEMPLATES = [
    "Can you see {c} in this photo? " + ANSWER_FORMAT,
    "Is {c} shown anywhere in this image? " + ANSWER_FORMAT,
    "Does this photo contain {c}? " + ANSWER_FORMAT,
    "Is {c} part of this picture? " + ANSWER_FORMAT,
    "Can you make out {c} in this image? " + ANSWER_FORMAT,
    "Is {c} depicted in this photo? " + ANSWER_FORMAT,
    "Does the image include {c}? " + ANSWER_FORMAT,
    "Do you notice {c} in this picture? " + ANSWER_FORMAT,
    "Is {c} anywhere to be seen in this photo? " + ANSWER_FORMAT,
    "Could {c} be in this image? " + ANSWER_FORMAT,
]


def _position_phrase(third: str) -> str:
    return "in the middle" if third == "middle" else f"on the {third} side"


def _roundness(shape: str) -> str:
    return "round" if shape in ("circle", "ring") else "angular"


def _conversation_qa(spec: ConceptSpec, record: dict) -> list[tuple[str, str]]:
    """The ten attribute questions for one concept, answers from metadata."""
    c = spec.identifier
    color, shape = spec.color, spec.shape
    third = record.get("third")
    if third is None:
        raise InputError(f"training record for {spec.concept_id} lacks position metadata")
    return [
        (f"What color is {c}?", f"{c} is {color}."),
        (f"What shape is {c}?", f"{c} is a {shape}."),
        (f"Describe {c} in one short sentence.", f"{c} is a {color} {shape}."),
        (f"Where is {c} in this image?", f"{c} is {_position_phrase(third)}."),
        (f"Is {c} round or angular?", f"{c} is {_roundness(shape)}."),
        (f"What does {c} look like?", f"{c} looks like a {color} {shape}."),
        (f"Which object in this image is {c}?", f"The {color} {shape} is {c}."),
        (f"Is {c} lighter or darker than the background?", f"{c} is lighter than the background."),
        (f"What is the main color of {c} in this photo?", f"The main color of {c} is {color}."),
        (f"Name the shape of {c}.", f"The shape of {c} is a {shape}."),
    ]


@dataclass
class TrainSample:
    image_key: str | None
    question: str
    answer: str
    kind: str
    concept_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "image": self.image_key,
            "question": self.question,
            "answer": self.answer,
            "kind": self.kind,
            "concept_ids": self.concept_ids,
        }


def system_prompt_items(blocks: list[ConceptTokenBlock], vocab: Vocabulary) -> list:
    """Token items for the personalized system prompt, ascending concept order.

    Each clause is: identifier token, literal " is ", the k soft-token
    positions, then ".".
    """
    if len(blocks) != len(vocab.identifiers):
        raise InputError(
            f"got {len(blocks)} blocks for {len(vocab.identifiers)} identifiers"
        )
    items: list = []
    for j, (block, ident) in enumerate(zip(blocks, vocab.identifiers)):
        if block is None:
            raise InputError(f"missing token block for {ident}")
        items.append(vocab.identifier_id(ident))
        items.extend(vocab.encode(" is "))
        items.extend(SoftToken(j, t) for t in range(block.k))
        items.extend(vocab.encode("."))
    return items


def build_positive(scenario: Scenario, seed: int = 0) -> list[TrainSample]:
    """5 seeded-random positive templates per training image, answer Yes."""
    rng = np.random.default_rng(seed)
    out = []
    for spec in scenario.concepts:
        for record in scenario.train_records(spec.concept_id):
            picks = rng.choice(len(POSITIVE_TEMPLATES), size=5, replace=False)
            for t in picks:
                out.append(
                    TrainSample(
                        image_key=record["image"],
                        question=POSITIVE_TEMPLATES[t].format(c=spec.identifier),
                        answer="Yes",
                        kind=KIND_POSITIVE,
                        concept_ids=[spec.concept_id],
                    )
                )
    return out


def build_random_negatives(scenario: Scenario, seed: int = 0, cap: int = 100) -> list[TrainSample]:
    """One negative QA over each of up to `cap` external distractor images."""
    externals = scenario.meta["external_train"]
    if not externals:
        raise InputError("scenario has no external distractor images")
    rng = np.random.default_rng(seed)
    count = min(cap, len(externals))
    chosen = rng.choice(len(externals), size=count, replace=False)
    concepts = scenario.concepts
    out = []
    for idx in sorted(chosen):
        spec = concepts[rng.integers(len(concepts))]
        template = NEGATIVE_TEMPLATES[rng.integers(len(NEGATIVE_TEMPLATES))]
        out.append(
            TrainSample(
                image_key=externals[idx],
                question=template.format(c=spec.identifier),
                answer="No",
                kind=KIND_RANDOM,
                concept_ids=[spec.concept_id],
            )
        )
    return out


def build_joint_negatives(
    scenario: Scenario, seed: int = 0, appendix_mode: bool = False
) -> list[TrainSample]:
    """Cross-concept negatives: image of concept a, question about concept b.

    Base mode yields exactly m*(m-1)*n samples; appendix mode uses 10 QA per
    image instead of one.
    """
    rng = np.random.default_rng(seed)
    per_image = 10 if appendix_mode else 1
    concepts = scenario.concepts
    out = []
    for a in concepts:
        for b in concepts:
            if a.concept_id == b.concept_id:
                continue
            for record in scenario.train_records(a.concept_id):
                picks = rng.choice(len(NEGATIVE_TEMPLATES), size=per_image, replace=False)
                for t in picks:
                    out.append(
                        TrainSample(
                            image_key=record["image"],
                            question=NEGATIVE_TEMPLATES[t].format(c=b.identifier),
                            answer="No",
                            kind=KIND_JOINT,
                            concept_ids=[b.concept_id],
                        )
                    )
    return out


def build_conversation(scenario: Scenario, seed: int = 0) -> list[TrainSample]:
    """Ten visual attribute QA per concept, spread over its training images."""
    out = []
    for spec in scenario.concepts:
        records = scenario.train_records(spec.concept_id)
        for i in range(10):
            record = records[i % len(records)]
            question, answer = _conversation_qa(spec, record)[i]
            out.append(
                TrainSample(
                    image_key=record["image"],
                    question=question,
                    answer=answer,
                    kind=KIND_CONVERSATION,
                    concept_ids=[spec.concept_id],
                )
            )
    return out


def build_training_samples(
    scenario: Scenario, seed: int = 0, appendix_mode: bool = False
) -> list[TrainSample]:
    return (
        build_positive(scenario, seed)
        + build_random_negatives(scenario, seed)
        + build_joint_negatives(scenario, seed, appendix_mode=appendix_mode)
        + build_conversation(scenario, seed)
    )


def expected_counts(m: int, n: int, n_external: int = 100, appendix_mode: bool = False) -> dict:
    """Exact per-kind sample counts for a scenario's training epoch."""
    return {
        KIND_POSITIVE: m * n * 5,
        KIND_RANDOM: min(100, n_external),
        KIND_JOINT: m * (m - 1) * n * (10 if appendix_mode else 1),
        KIND_CONVERSATION: 10 * m,
    }


def assemble_batch(
    sample: TrainSample,
    vocab: Vocabulary,
    image_tokens: dict[str, np.ndarray],
    prompt_items: list,
) -> SequenceBatch:
    """Turn a text sample into a model sequence: image prefix, system prompt,
    question + newline, answer + EOS."""
    image = None
    if sample.image_key is not None:
        image = image_tokens[sample.image_key]
    question = vocab.encode(sample.question + "\n")
    answer = vocab.encode(sample.answer) + [EOS_ID]
    return SequenceBatch(image=image, prompt=list(prompt_items), question=question, answer=answer)


# -- test QA generation (written to qa/*.json by the dataset builder) -----------


def _letter_options(rng, correct: str, wrong: str):
    """Randomize which option letter carries the correct answer."""
    if rng.integers(2) == 0:
        return [correct, wrong], 0
    return [wrong, correct], 1


def choice_question_text(question: str, options: list[str]) -> str:
    return (
        f"{question}\nA. {options[0]}\nB. {options[1]}\nAnswer with the letter only."
    )


def _other_color(scenario, spec, rng):
    pool = [c.color for c in scenario.concepts if c.color != spec.color]
    pool += [name for name, _ in (("purple", 0), ("orange", 0), ("cyan", 0)) if name != spec.color]
    return pool[rng.integers(len(pool))]


def _other_shape(scenario, spec, rng):
    pool = [s for s in ("circle", "square", "triangle", "diamond") if s != spec.shape]
    return pool[rng.integers(len(pool))]


def _single_choice(scenario, spec, record, rng, image_key):
    kind = rng.integers(3)
    if kind == 0:
        options, correct = _letter_options(rng, spec.color, _other_color(scenario, spec, rng))
        q = f"What color is {spec.identifier}?"
    elif kind == 1:
        options, correct = _letter_options(rng, spec.shape, _other_shape(scenario, spec, rng))
        q = f"What shape is {spec.identifier}?"
    else:
        third = record["third"]
        wrong = [t for t in ("left", "middle", "right") if t != third][rng.integers(2)]
        options, correct = _letter_options(rng, third, wrong)
        q = f"Which third of the image is {spec.identifier} in?"
    return {
        "image": image_key,
        "question": choice_question_text(q, options),
        "options": options,
        "correct": correct,
        "concept_ids": [spec.concept_id],
        "category": "single",
    }


def _subsets(concept_ids):
    """Non-empty subsets in deterministic order."""
    out = []
    for bits in range(1, 2 ** len(concept_ids)):
        out.append([cid for i, cid in enumerate(concept_ids) if bits >> i & 1])
    return out


def build_choice_visual(scenario: Scenario, seed: int = 0) -> list[dict]:
    """Visual multiple-choice items: one per single test image, one per
    non-empty concept subset per multi test image: 5(m + 2^m - 1) items."""
    rng = np.random.default_rng(seed)
    items = []
    for rec in scenario.meta["test_single"]:
        spec = scenario.concept(rec["concept_id"])
        items.append(_single_choice(scenario, spec, rec, rng, rec["image"]))
    concept_ids = [c.concept_id for c in scenario.concepts]
    for rec in scenario.meta["test_multi"]:
        placements = rec["placements"]
        for subset in _subsets(concept_ids):
            if len(subset) == 1:
                # single-identifier query: single category even on a multi image
                spec = scenario.concept(subset[0])
                item = _single_choice(scenario, spec, placements[subset[0]], rng, rec["image"])
                item["concept_ids"] = subset
                items.append(item)
            else:
                xs = [placements[cid]["cx"] for cid in subset]
                leftmost = subset[int(np.argmin(xs))]
                wrong = [cid for cid in subset if cid != leftmost]
                wrong_id = wrong[rng.integers(len(wrong))]
                names = {cid: scenario.concept(cid).identifier for cid in subset}
                options, correct = _letter_options(rng, names[leftmost], names[wrong_id])
                listed = " and ".join(names[cid] for cid in subset)
                items.append(
                    {
                        "image": rec["image"],
                        "question": choice_question_text(
                            f"Which of {listed} is furthest left?", options
                        ),
                        "options": options,
                        "correct": correct,
                        "concept_ids": subset,
                        "category": "multi",
                    }
                )
    return items


def build_choice_text(scenario: Scenario, seed: int = 0) -> list[dict]:
    """Text-only multiple choice: 5 intrinsic questions per concept plus 5
    multi-concept questions: 5m + 5 items."""
    rng = np.random.default_rng(seed)
    items = []
    for spec in scenario.concepts:
        c = spec.identifier
        qs = [
            (f"What color is {c}?", spec.color, _other_color(scenario, spec, rng)),
            (f"What shape is {c}?", spec.shape, _other_shape(scenario, spec, rng)),
            (f"Is {c} round or angular?", _roundness(spec.shape),
             "angular" if _roundness(spec.shape) == "round" else "round"),
            (f"Is {c} a {spec.shape}?", "Yes", "No"),
            (f"Is {c} {_other_color(scenario, spec, rng)}?", "No", "Yes"),
        ]
        for q, right, wrong in qs:
            options, correct = _letter_options(rng, right, wrong)
            items.append(
                {
                    "image": None,
                    "question": choice_question_text(q, options),
                    "options": options,
                    "correct": correct,
                    "concept_ids": [spec.concept_id],
                    "category": "single",
                }
            )
    concepts = scenario.concepts
    for i in range(5):
        if scenario.m == 1:
            spec = concepts[0]
            q = f"Is {spec.identifier} a {spec.color} {spec.shape}?"
            options, correct = _letter_options(rng, "Yes", "No")
            subset = [spec.concept_id]
        else:
            a, b = concepts[i % scenario.m], concepts[(i + 1) % scenario.m]
            if i % 2 == 0:
                q = f"Which one is a {a.shape}?"
                options, correct = _letter_options(rng, a.identifier, b.identifier)
            else:
                q = f"Are {a.identifier} and {b.identifier} the same color?"
                options, correct = _letter_options(rng, "No", "Yes")
            subset = [a.concept_id, b.concept_id]
        items.append(
            {
                "image": None,
                "question": choice_question_text(q, options),
                "options": options,
                "correct": correct,
                "concept_ids": subset,
                "category": "single" if scenario.m == 1 else "multi",
            }
        )
    return items


def build_vqa(scenario: Scenario, seed: int = 0) -> list[dict]:
    """Open-ended VQA items, equal in number to the visual choice items."""
    rng = np.random.default_rng(seed)
    items = []
    for rec in scenario.meta["test_single"]:
        spec = scenario.concept(rec["concept_id"])
        qa = _conversation_qa(spec, rec)
        q, a = qa[rng.integers(len(qa))]
        items.append(
            {
                "image": rec["image"],
                "question": q,
                "reference": a,
                "concept_ids": [spec.concept_id],
                "category": "single",
            }
        )
    concept_ids = [c.concept_id for c in scenario.concepts]
    for rec in scenario.meta["test_multi"]:
        for subset in _subsets(concept_ids):
            if len(subset) == 1:
                spec = scenario.concept(subset[0])
                qa = _conversation_qa(spec, rec["placements"][subset[0]])
                q, a = qa[rng.integers(len(qa))]
            else:
                specs = [scenario.concept(cid) for cid in subset]
                names = " and ".join(s.identifier for s in specs)
                q = f"Describe {names}."
                a = " ".join(f"{s.identifier} is a {s.color} {s.shape}." for s in specs)
            items.append(
                {
                    "image": rec["image"],
                    "question": q,
                    "reference": a,
                    "concept_ids": subset,
                    "category": "single" if len(subset) == 1 else "multi",
                }
            )
    return items


def build_caption_items(scenario: Scenario) -> list[dict]:
    """Captioning items: every test image with its required identifiers."""
    items = []
    for rec in scenario.meta["test_single"]:
        items.append(
            {
                "image": rec["image"],
                "identifiers": [scenario.concept(rec["concept_id"]).identifier],
                "category": "single",
            }
        )
    idents = [c.identifier for c in scenario.concepts]
    for rec in scenario.meta["test_multi"]:
        items.append({"image": rec["image"], "identifiers": list(idents), "category": "multi"})
    return items
