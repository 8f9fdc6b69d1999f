"""Data model and CSV ingestion for three-arm encouragement trials.

One row per participant. Arms are ``NoAI`` (no access), ``AIOnly`` (access,
no training) and ``AITrained`` (access plus training). Adoption is only
meaningful in the two AI arms.

Unspotted rubric issues are encoded with the literal ``NA`` and are kept
distinct from a spotted issue that earned zero points.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataValidationError

NA = "NA"
N_ISSUES = 4
# Per-issue maxima are not published; only their total (12) is. Configurable.
DEFAULT_RUBRIC_MAX = (2, 2, 3, 5)
GRID_TOL = 1e-9


class Arm(enum.Enum):
    NoAI = 1
    AIOnly = 2
    AITrained = 3

    @property
    def has_adoption(self) -> bool:
        return self is not Arm.NoAI

    @classmethod
    def parse(cls, text: str) -> "Arm":
        key = text.strip()
        for arm in cls:
            if key.lower() in (arm.name.lower(), str(arm.value)):
                return arm
        raise ValueError(f"unknown arm {text!r}; expected one of {[a.name for a in cls]}")


@dataclass(frozen=True)
class GradeScale:
    """Ordered (letter, grade point) pairs, lowest first."""

    pairs: tuple[tuple[str, float], ...]

    def __post_init__(self):
        points = [p for _, p in self.pairs]
        if any(b <= a for a, b in zip(points, points[1:])):
            raise ValueError("grade points must be strictly increasing")
        letters = [letter for letter, _ in self.pairs]
        if len(set(letters)) != len(letters):
            raise ValueError("duplicate letter grades")

    @property
    def letters(self) -> tuple[str, ...]:
        return tuple(letter for letter, _ in self.pairs)

    @property
    def points(self) -> tuple[float, ...]:
        return tuple(p for _, p in self.pairs)

    @property
    def y_min(self) -> float:
        return self.pairs[0][1]

    @property
    def y_max(self) -> float:
        return self.pairs[-1][1]

    def snap(self, value: float) -> float | None:
        """Return the grid point equal to ``value`` (within 1e-9), else None."""
        for p in self.points:
            if abs(value - p) <= GRID_TOL:
                return p
        return None

    def nearest(self, value: float) -> float:
        """Nearest grid point; exact midpoints go to the lower point."""
        best = self.points[0]
        for p in self.points[1:]:
            if abs(value - p) < abs(value - best):
                best = p
        return best

    def letter_for(self, points: float) -> str:
        for letter, p in self.pairs:
            if abs(points - p) <= GRID_TOL:
                return letter
        raise ValueError(f"{points} is not on the grade grid")


GRADE_SCALE = GradeScale(
    (
        ("D", 1.0),
        ("D+", 1.3),
        ("C-", 1.7),
        ("C", 2.0),
        ("C+", 2.3),
        ("B-", 2.7),
        ("B", 3.0),
        ("B+", 3.3),
        ("A-", 3.7),
        ("A", 4.0),
        ("A+", 4.3),
    )
)


def grade_to_points(letter: str, scale: GradeScale = GRADE_SCALE) -> float:
    for name, points in scale.pairs:
        if name == letter:
            return points
    raise ValueError(f"unknown letter grade {letter!r}")


@dataclass(frozen=True)
class IssueScore:
    issue_id: int
    spotted: bool
    score: int | None
    max_score: int

    def __post_init__(self):
        if not 1 <= self.issue_id <= N_ISSUES:
            raise ValueError(f"issue_id must be in 1..{N_ISSUES}")
        if self.max_score <= 0:
            raise ValueError("max_score must be positive")
        if not self.spotted and self.score is not None:
            raise ValueError(f"issue {self.issue_id} not spotted but has a score; use NA")
        if self.spotted:
            if self.score is None:
                raise ValueError(f"issue {self.issue_id} spotted but score is NA")
            if not 0 <= self.score <= self.max_score:
                raise ValueError(f"issue {self.issue_id} score {self.score} outside 0..{self.max_score}")


@dataclass(frozen=True)
class ExamRecord:
    unit_id: str
    arm: Arm
    adopted: bool | None
    issues: tuple[IssueScore, ...]
    grade_point: float
    word_count: int
    fk_grade: float
    rule_misstatements: int
    case_hallucinations: int
    case_misstatements: int
    cases_cited: int
    permission: int | None = None
    helpfulness: int | None = None
    prior_llm_training: bool | None = None
    answer_text: str | None = field(default=None, compare=False)
    scale: GradeScale = field(default=GRADE_SCALE, repr=False, compare=False)

    def __post_init__(self):
        if len(self.issues) != N_ISSUES:
            raise ValueError(f"expected {N_ISSUES} issues, got {len(self.issues)}")
        if [i.issue_id for i in self.issues] != list(range(1, N_ISSUES + 1)):
            raise ValueError("issues must be ordered 1..4")
        snapped = self.scale.snap(self.grade_point)
        if snapped is None:
            raise ValueError(f"grade_point {self.grade_point} is off the grade grid")
        object.__setattr__(self, "grade_point", snapped)
        if self.arm.has_adoption and self.adopted is None:
            raise ValueError(f"adopted is required for arm {self.arm.name}")
        if not self.arm.has_adoption and self.adopted is not None:
            raise ValueError("adopted must be empty for arm NoAI")
        if self.word_count < 0:
            raise ValueError("word_count must be nonnegative")
        if not math.isfinite(self.fk_grade):
            raise ValueError("fk_grade must be finite")
        if not 0 <= self.rule_misstatements <= N_ISSUES:
            raise ValueError(f"rule_misstatements must be in 0..{N_ISSUES}")
        for name in ("case_hallucinations", "case_misstatements", "cases_cited"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("permission", "helpfulness"):
            value = getattr(self, name)
            if value is not None and not 1 <= value <= 5:
                raise ValueError(f"{name} must be in 1..5")

    @property
    def issues_missed(self) -> int:
        return sum(not i.spotted for i in self.issues)

    @property
    def total_score(self) -> int:
        # NA counts as zero toward the total
        return sum(i.score for i in self.issues if i.spotted)


# Numeric metrics that can be summarized per arm.
METRICS = (
    "grade_point",
    "issues_missed",
    "total_score",
    "word_count",
    "fk_grade",
    "rule_misstatements",
    "case_hallucinations",
    "case_misstatements",
    "cases_cited",
    "permission",
    "helpfulness",
)
METRIC_ALIASES = {"complexity": "fk_grade", "length": "word_count"}


def canonical_metric(name: str) -> str:
    name = METRIC_ALIASES.get(name, name)
    if name not in METRICS:
        raise ValueError(f"unknown metric {name!r}; valid metrics: {', '.join(METRICS)}")
    return name


@dataclass(frozen=True)
class TrialDataset:
    records: tuple[ExamRecord, ...]
    scale: GradeScale = GRADE_SCALE

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.unit_id in seen:
                raise DataValidationError(f"duplicate unit_id {rec.unit_id!r}", field="unit_id")
            seen.add(rec.unit_id)
            if not self.y_min <= rec.grade_point <= self.y_max:
                raise DataValidationError(
                    f"grade_point {rec.grade_point} outside support", field="grade_point"
                )

    @property
    def support(self) -> tuple[float, float]:
        return (self.scale.y_min, self.scale.y_max)

    @property
    def y_min(self) -> float:
        return self.scale.y_min

    @property
    def y_max(self) -> float:
        return self.scale.y_max

    def __len__(self):
        return len(self.records)

    def arm(self, arm: Arm) -> tuple[ExamRecord, ...]:
        return tuple(r for r in self.records if r.arm is arm)

    def arm_sizes(self) -> dict[Arm, int]:
        return {a: len(self.arm(a)) for a in Arm}

    def metric_values(self, arm: Arm, metric: str) -> list[float]:
        metric = canonical_metric(metric)
        values = (getattr(r, metric) for r in self.arm(arm))
        return [float(v) for v in values if v is not None]


# ---------------------------------------------------------------------------
# CSV schema


def issue_columns() -> list[str]:
    return [f"issue{k}_spotted" for k in range(1, N_ISSUES + 1)] + [
        f"issue{k}_score" for k in range(1, N_ISSUES + 1)
    ]


COLUMNS = (
    ["unit_id", "arm", "adopted"]
    + issue_columns()
    + [
        "grade_point",
        "word_count",
        "fk_grade",
        "rule_misstatements",
        "case_hallucinations",
        "case_misstatements",
        "cases_cited",
        "permission",
        "helpfulness",
        "prior_llm_training",
    ]
)

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}


def _parse_bool(text: str) -> bool:
    key = text.strip().lower()
    if key in _TRUE:
        return True
    if key in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _optional(parser, text: str):
    return None if text.strip() == "" else parser(text)


def _parse_row(row: dict, lineno: int, scale: GradeScale, rubric_max: Sequence[int]) -> ExamRecord:
    def get(name, parser, optional=False):
        raw = row.get(name)
        if raw is None:
            raise DataValidationError("missing column", row=lineno, field=name)
        try:
            if optional:
                return _optional(parser, raw)
            if raw.strip() == "":
                raise ValueError("required value is empty")
            return parser(raw)
        except ValueError as exc:
            raise DataValidationError(str(exc), row=lineno, field=name) from None

    unit_id = get("unit_id", str.strip)
    arm = get("arm", Arm.parse)
    adopted = get("adopted", _parse_bool, optional=True)
    if arm.has_adoption and adopted is None:
        raise DataValidationError(f"adopted is required for arm {arm.name}", row=lineno, field="adopted")
    if not arm.has_adoption and adopted is not None:
        raise DataValidationError("adopted must be empty for arm NoAI", row=lineno, field="adopted")

    issues = []
    for k in range(1, N_ISSUES + 1):
        spotted = get(f"issue{k}_spotted", _parse_bool)
        raw_score = row.get(f"issue{k}_score", "").strip()
        try:
            score = None if raw_score == NA else _parse_int(raw_score)
            issues.append(IssueScore(k, spotted, score, rubric_max[k - 1]))
        except ValueError as exc:
            raise DataValidationError(str(exc), row=lineno, field=f"issue{k}_score") from None

    grade_point = get("grade_point", float)
    if scale.snap(grade_point) is None:
        raise DataValidationError(
            f"grade_point {grade_point} is off the grade grid {list(scale.points)}",
            row=lineno,
            field="grade_point",
        )

    values = dict(
        unit_id=unit_id,
        arm=arm,
        adopted=adopted,
        issues=tuple(issues),
        grade_point=grade_point,
        word_count=get("word_count", _parse_int),
        fk_grade=get("fk_grade", float),
        rule_misstatements=get("rule_misstatements", _parse_int),
        case_hallucinations=get("case_hallucinations", _parse_int),
        case_misstatements=get("case_misstatements", _parse_int),
        cases_cited=get("cases_cited", _parse_int),
        permission=get("permission", _parse_int, optional=True),
        helpfulness=get("helpfulness", _parse_int, optional=True),
        prior_llm_training=get("prior_llm_training", _parse_bool, optional=True),
        scale=scale,
    )
    try:
        return ExamRecord(**values)
    except ValueError as exc:
        raise DataValidationError(str(exc), row=lineno) from None


def parse_dataset(
    lines: Iterable[str],
    scale: GradeScale = GRADE_SCALE,
    rubric_max: Sequence[int] = DEFAULT_RUBRIC_MAX,
) -> TrialDataset:
    if len(rubric_max) != N_ISSUES or any(m <= 0 for m in rubric_max):
        raise DataValidationError(f"rubric_max must hold {N_ISSUES} positive integers")
    reader = csv.DictReader(lines)
    if reader.fieldnames is None:
        raise DataValidationError("no records")
    missing = [c for c in COLUMNS if c not in reader.fieldnames]
    if missing:
        raise DataValidationError(f"missing columns: {', '.join(missing)}")
    # header is line 1, first data row is line 2
    records = [_parse_row(row, i, scale, rubric_max) for i, row in enumerate(reader, start=2)]
    if not records:
        raise DataValidationError("no records")
    return TrialDataset(tuple(records), scale)


def load_dataset(
    path: str | Path,
    scale: GradeScale = GRADE_SCALE,
    rubric_max: Sequence[int] = DEFAULT_RUBRIC_MAX,
) -> TrialDataset:
    """Read and validate a trial CSV file.

    Raises
    ------
    DataValidationError
        On any schema or invariant violation; the message names the
        offending row (1-based file line) and field.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_dataset(fh, scale, rubric_max)


def _fmt_bool(value: bool | None) -> str:
    return "" if value is None else ("1" if value else "0")


def _fmt_opt(value) -> str:
    return "" if value is None else str(value)


def record_to_row(rec: ExamRecord) -> dict[str, str]:
    row = {
        "unit_id": rec.unit_id,
        "arm": rec.arm.name,
        "adopted": _fmt_bool(rec.adopted),
        "grade_point": f"{rec.grade_point:.1f}",
        "word_count": str(rec.word_count),
        "fk_grade": repr(float(rec.fk_grade)),
        "rule_misstatements": str(rec.rule_misstatements),
        "case_hallucinations": str(rec.case_hallucinations),
        "case_misstatements": str(rec.case_misstatements),
        "cases_cited": str(rec.cases_cited),
        "permission": _fmt_opt(rec.permission),
        "helpfulness": _fmt_opt(rec.helpfulness),
        "prior_llm_training": _fmt_bool(rec.prior_llm_training),
    }
    for issue in rec.issues:
        row[f"issue{issue.issue_id}_spotted"] = _fmt_bool(issue.spotted)
        row[f"issue{issue.issue_id}_score"] = NA if issue.score is None else str(issue.score)
    return row


def dumps_dataset(dataset: TrialDataset) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in dataset.records:
        writer.writerow(record_to_row(rec))
    return buf.getvalue()


def save_dataset(dataset: TrialDataset, path: str | Path) -> None:
    Path(path).write_text(dumps_dataset(dataset), encoding="utf-8")


def with_records(dataset: TrialDataset, records: Iterable[ExamRecord]) -> TrialDataset:
    return replace(dataset, records=tuple(records))
