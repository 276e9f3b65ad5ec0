"""VisDial-format dialogue data: loading, validation, dense-annotation
joins, and the relevance-consistency audit.

A corpus is immutable after load and safe to share across workers.
"""

import json
from dataclasses import dataclass, field

from .errors import DataError, JoinError, ParseError, SchemaError, ValidationError

SPLITS = ("train", "val", "test")
CANDIDATES_PER_ROUND = 100
MAX_ROUNDS = 10


@dataclass(frozen=True)
class DialogueRound:
    """One question/candidate-set exchange of a dialogue.

    gt_answer_idx is None for unanswered rounds (test split); otherwise it
    is an index into Corpus.answers and a member of candidate_idxs.
    """

    image_id: int
    round: int  # 1-based position within the dialogue
    question_idx: int
    candidate_idxs: tuple[int, ...]
    gt_answer_idx: int | None

    @property
    def answered(self) -> bool:
        return self.gt_answer_idx is not None

    def gt_position(self) -> int:
        """0-based position of the ground truth within candidate_idxs."""
        if self.gt_answer_idx is None:
            raise DataError(f"round {self.round} of image {self.image_id} is unanswered")
        return self.candidate_idxs.index(self.gt_answer_idx)


@dataclass(frozen=True)
class Dialogue:
    image_id: int
    rounds: tuple[DialogueRound, ...]


@dataclass
class Corpus:
    split: str
    questions: list[str]
    answers: list[str]
    dialogues: list[Dialogue]
    _round_index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self._round_index:
            for dlg in self.dialogues:
                for rnd in dlg.rounds:
                    self._round_index[(rnd.image_id, rnd.round)] = rnd

    def get_round(self, image_id: int, round: int) -> DialogueRound:
        try:
            return self._round_index[(image_id, round)]
        except KeyError:
            raise JoinError(f"no round {round} for image {image_id} in {self.split} corpus") from None

    def has_round(self, image_id: int, round: int) -> bool:
        return (image_id, round) in self._round_index

    def iter_rounds(self):
        for dlg in self.dialogues:
            yield from dlg.rounds

    def question_text(self, rnd: DialogueRound) -> str:
        return self.questions[rnd.question_idx]

    def answer_text(self, answer_idx: int) -> str:
        return self.answers[answer_idx]

    @property
    def n_rounds(self) -> int:
        return len(self._round_index)


@dataclass(frozen=True)
class DenseAnnotation:
    """Per-round human relevance scores, aligned to candidate_idxs."""

    image_id: int
    round: int
    relevance: tuple[float, ...]


@dataclass(frozen=True)
class AuditReport:
    """Counts and percentages for the dense-annotation consistency audit."""

    pct_no_relevance_one: float  # share of rounds whose max relevance < 1.0
    pct_gt_irrelevant: float  # share of gt-bearing rounds with zero gt relevance
    n_annotated: int
    n_no_relevance_one: int
    n_gt_irrelevant: int
    n_with_gt: int


def _read_json(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", offset=exc.pos) from exc


def load_dialogues(path, split: str) -> Corpus:
    """Load a VisDial v1.0 dialogue file into a fully indexed Corpus.

    Every candidate list must have exactly 100 distinct entries and every
    stored index must resolve; violations raise SchemaError naming the
    image/round. Rounds without an answer are kept and flagged unanswered.
    """
    if split not in SPLITS:
        raise ValidationError(f"unknown split {split!r}; expected one of {SPLITS}")
    doc = _read_json(path)
    try:
        data = doc["data"]
        questions = list(data["questions"])
        answers = list(data["answers"])
        dialogs = data["dialogs"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: missing top-level data.questions/answers/dialogs") from exc

    dialogues = []
    seen_images = set()
    for entry in dialogs:
        try:
            image_id = int(entry["image_id"])
            turns = entry["dialog"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{path}: dialog entry without image_id/dialog") from exc
        if image_id in seen_images:
            raise SchemaError(f"image {image_id} appears more than once in split {split}")
        seen_images.add(image_id)
        if len(turns) > MAX_ROUNDS:
            raise SchemaError(f"image {image_id} has {len(turns)} rounds, more than {MAX_ROUNDS}")
        rounds = []
        for pos, turn in enumerate(turns):
            rounds.append(_parse_round(image_id, pos + 1, turn, len(questions), len(answers)))
        dialogues.append(Dialogue(image_id=image_id, rounds=tuple(rounds)))
    return Corpus(split=split, questions=questions, answers=answers, dialogues=dialogues)


def _parse_round(image_id, round_no, turn, n_questions, n_answers):
    where = f"image {image_id} round {round_no}"
    try:
        question_idx = int(turn["question"])
        options = turn["answer_options"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{where}: round lacks question/answer_options") from exc
    if len(options) != CANDIDATES_PER_ROUND:
        raise SchemaError(f"{where}: candidate list has {len(options)} entries, expected {CANDIDATES_PER_ROUND}")
    options = tuple(int(o) for o in options)
    if len(set(options)) != CANDIDATES_PER_ROUND:
        raise SchemaError(f"{where}: duplicate candidate indices")
    if not 0 <= question_idx < n_questions:
        raise SchemaError(f"{where}: question index {question_idx} out of range")
    for o in options:
        if not 0 <= o < n_answers:
            raise SchemaError(f"{where}: answer index {o} out of range")

    gt_answer_idx = None
    gt_index = turn.get("gt_index")
    answer = turn.get("answer")
    if gt_index is not None:
        if not 0 <= int(gt_index) < CANDIDATES_PER_ROUND:
            raise SchemaError(f"{where}: gt_index {gt_index} out of range")
        gt_answer_idx = options[int(gt_index)]
        if answer is not None and int(answer) != gt_answer_idx:
            raise SchemaError(f"{where}: answer {answer} disagrees with answer_options[gt_index]")
    elif answer is not None:
        gt_answer_idx = int(answer)
        if gt_answer_idx not in options:
            raise SchemaError(f"{where}: answer {gt_answer_idx} not among its candidates")
    return DialogueRound(
        image_id=image_id,
        round=round_no,
        question_idx=question_idx,
        candidate_idxs=options,
        gt_answer_idx=gt_answer_idx,
    )


def save_dialogues(corpus: Corpus, path) -> None:
    """Serialize a Corpus back to the VisDial v1.0 wire format."""
    dialogs = []
    for dlg in corpus.dialogues:
        turns = []
        for rnd in dlg.rounds:
            turn = {"question": rnd.question_idx, "answer_options": list(rnd.candidate_idxs)}
            if rnd.gt_answer_idx is not None:
                turn["answer"] = rnd.gt_answer_idx
                turn["gt_index"] = rnd.gt_position()
            turns.append(turn)
        dialogs.append({"image_id": dlg.image_id, "dialog": turns})
    doc = {
        "version": "1.0",
        "split": corpus.split,
        "data": {"questions": corpus.questions, "answers": corpus.answers, "dialogs": dialogs},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_dense_annotations(path, corpus: Corpus) -> list[DenseAnnotation]:
    """Load dense relevance annotations and join them to corpus rounds.

    Records carry image_id, round_id (1-based) and gt_relevance (100 floats
    in [0,1]). Unknown rounds raise JoinError; duplicate (image, round)
    keys are rejected.
    """
    doc = _read_json(path)
    if not isinstance(doc, list):
        raise SchemaError(f"{path}: expected a JSON list of annotation records")
    annotations = []
    seen = set()
    for rec in doc:
        try:
            image_id = int(rec["image_id"])
            round_no = int(rec["round_id"])
            relevance = rec["gt_relevance"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{path}: record lacks image_id/round_id/gt_relevance") from exc
        where = f"image {image_id} round {round_no}"
        if not corpus.has_round(image_id, round_no):
            raise JoinError(f"{where}: no matching dialogue round in {corpus.split} corpus")
        if (image_id, round_no) in seen:
            raise DataError(f"{where}: duplicate dense annotation")
        seen.add((image_id, round_no))
        if len(relevance) != CANDIDATES_PER_ROUND:
            raise SchemaError(f"{where}: relevance has {len(relevance)} values, expected {CANDIDATES_PER_ROUND}")
        values = tuple(float(v) for v in relevance)
        for v in values:
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{where}: relevance {v} outside [0, 1]")
        annotations.append(DenseAnnotation(image_id=image_id, round=round_no, relevance=values))
    return annotations


def audit_relevance(annotations, corpus: Corpus) -> AuditReport:
    """Audit annotated rounds for missing full-relevance answers and
    irrelevant ground truths."""
    annotations = list(annotations)
    if not annotations:
        raise DataError("audit_relevance needs at least one annotation")
    n_no_one = 0
    n_gt_zero = 0
    n_with_gt = 0
    for ann in annotations:
        if max(ann.relevance) < 1.0:
            n_no_one += 1
        rnd = corpus.get_round(ann.image_id, ann.round)
        if rnd.answered:
            n_with_gt += 1
            if ann.relevance[rnd.gt_position()] == 0.0:
                n_gt_zero += 1
    n = len(annotations)
    return AuditReport(
        pct_no_relevance_one=100.0 * n_no_one / n,
        pct_gt_irrelevant=100.0 * n_gt_zero / n_with_gt if n_with_gt else 0.0,
        n_annotated=n,
        n_no_relevance_one=n_no_one,
        n_gt_irrelevant=n_gt_zero,
        n_with_gt=n_with_gt,
    )
