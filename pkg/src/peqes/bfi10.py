"""The canonical example study: a short demographic questionnaire plus
the BFI-10 personality inventory, analyzed with per-trait Welch t-tests
between two age groups.

BFI-10 scores each Big Five trait from two items on a 1..5 scale, one of
them reverse-coded (reverse(x) = 6 - x):

    extraversion       items 1R, 6
    agreeableness      items 2, 7R
    conscientiousness  items 3R, 8
    neuroticism        items 4R, 9
    openness           items 5R, 10
"""

from __future__ import annotations

from peqes import crypto
from peqes.study import StudySpec, SurveyItem

TRAITS = {
    "extraversion": (("bfi1", "bfi6"), ("bfi1",)),
    "agreeableness": (("bfi2", "bfi7"), ("bfi7",)),
    "conscientiousness": (("bfi3", "bfi8"), ("bfi3",)),
    "neuroticism": (("bfi4", "bfi9"), ("bfi4",)),
    "openness": (("bfi5", "bfi10"), ("bfi5",)),
}

AGE_SPLIT = 25

_PROMPTS = {
    "bfi1": "I see myself as someone who is reserved.",
    "bfi2": "I see myself as someone who is generally trusting.",
    "bfi3": "I see myself as someone who tends to be lazy.",
    "bfi4": "I see myself as someone who is relaxed, handles stress well.",
    "bfi5": "I see myself as someone who has few artistic interests.",
    "bfi6": "I see myself as someone who is outgoing, sociable.",
    "bfi7": "I see myself as someone who tends to find fault with others.",
    "bfi8": "I see myself as someone who does a thorough job.",
    "bfi9": "I see myself as someone who gets nervous easily.",
    "bfi10": "I see myself as someone who has an active imagination.",
}


def analysis_script(age_split: int = AGE_SPLIT) -> str:
    lines = [f"let young, old = split(data, age < {age_split})"]
    for trait, (items, reverse) in TRAITS.items():
        items_s = ", ".join(items)
        reverse_s = ", ".join(reverse)
        lines.append(f"let {trait[0]}_y = score_scale(young, items=[{items_s}], reverse=[{reverse_s}])")
        lines.append(f"let {trait[0]}_o = score_scale(old, items=[{items_s}], reverse=[{reverse_s}])")
        lines.append(f"let {trait} = ttest_ind({trait[0]}_y, {trait[0]}_o, welch)")
    for trait in TRAITS:
        lines.append(f"output {trait}")
    return "\n".join(lines) + "\n"


def survey_items() -> tuple[SurveyItem, ...]:
    items = [
        SurveyItem(id="age", prompt="How old are you?", kind="integer", min_value=18, max_value=99),
        SurveyItem(
            id="gender",
            prompt="How do you describe yourself?",
            kind="choice",
            options=("female", "male", "non-binary", "prefer not to say"),
        ),
        SurveyItem(id="occupation", prompt="What is your occupation?", kind="text"),
    ]
    for item_id, prompt in _PROMPTS.items():
        items.append(
            SurveyItem(id=item_id, prompt=prompt, kind="integer", min_value=1, max_value=5)
        )
    return tuple(items)


def bfi10_spec(researcher_public: bytes, mandate_delete: bool = False, target_n: int | None = None) -> StudySpec:
    return StudySpec(
        name="Personality and age",
        description=(
            "Explores differences in Big Five personality traits between two "
            "age groups using the BFI-10 short inventory."
        ),
        survey=survey_items(),
        analysis=analysis_script(),
        researcher_public=researcher_public,
        suite_id=crypto.SUITE_ID,
        mandate_delete=mandate_delete,
        target_n=target_n,
    )
