"""Small builders for synthetic records and datasets."""

from adoptbounds.trial_data import DEFAULT_RUBRIC_MAX, Arm, ExamRecord, IssueScore, TrialDataset


def make_record(unit_id, arm, adopted, grade, **kw):
    values = dict(
        unit_id=unit_id,
        arm=arm,
        adopted=adopted if arm is not Arm.NoAI else None,
        issues=tuple(IssueScore(k, True, 1, m) for k, m in enumerate(DEFAULT_RUBRIC_MAX, start=1)),
        grade_point=grade,
        word_count=500,
        fk_grade=12.0,
        rule_misstatements=1,
        case_hallucinations=0,
        case_misstatements=0,
        cases_cited=3,
    )
    values.update(kw)
    return ExamRecord(**values)


def make_dataset(cells):
    """``cells`` maps arm -> list of (adopted, grade) pairs."""
    records = []
    for arm, units in cells.items():
        for i, (adopted, grade) in enumerate(units):
            records.append(make_record(f"{arm.name}-{i}", arm, adopted, grade))
    return TrialDataset(tuple(records))
