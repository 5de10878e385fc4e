import pytest

from redeval.errors import ValidationError
from redeval.gateway.templates import TemplateRegistry
from redeval.gateway.types import STAGES

EXPECTED_IDS = [
    "ablation_rank_combined",
    "ablation_rank_vanilla",
    "atom_rank_clarity",
    "atom_rank_completeness",
    "atom_rank_questionability",
    "atom_rank_specificity",
    "atom_rank_validity",
    "atomic_extraction",
    "e2e_answer_context",
    "e2e_answer_parametric",
    "e2e_correctness",
    "equivalence_check",
    "evidence_selection",
    "filter_answer_exclusion",
    "filter_answerability",
    "filter_contextual_independence",
    "filter_information_equivalence",
    "filter_question_clarity",
    "question_generation",
    "question_rank_connectivity",
    "question_rank_essentiality",
    "question_rank_fluency",
    "question_rank_validity",
    "validity_filter",
]


def test_registry_ships_expected_templates(registry):
    assert registry.ids() == EXPECTED_IDS


def test_every_template_renders_and_is_staged(registry):
    for template_id in registry.ids():
        template = registry.get(template_id)
        assert template.stage in STAGES
        assert template.version
        payload = {slot: f"value-{slot}" for slot in template.slots}
        rendered = template.render(payload)
        for slot in template.slots:
            assert f"value-{slot}" in rendered


def test_render_rejects_missing_and_extra_slots(registry):
    template = registry.get("validity_filter")
    with pytest.raises(ValidationError):
        template.render({})
    with pytest.raises(ValidationError):
        template.render({"atom_text": "x", "bogus": "y"})


def test_unknown_template_id(registry):
    with pytest.raises(ValidationError):
        registry.get("no_such_template")


def test_extra_dir_adds_and_overrides(tmp_path):
    (tmp_path / "custom_probe.txt").write_text(
        "id: custom_probe\nversion: 1\nstage: e2e\nslots: question\n---\nQ: {question}\n"
    )
    (tmp_path / "validity_filter.txt").write_text(
        "id: validity_filter\nversion: 99\nstage: valid_selection\n"
        "slots: atom_text\n---\nOVERRIDDEN {atom_text}\n"
    )
    registry = TemplateRegistry(extra_dir=tmp_path)
    assert "custom_probe" in registry.ids()
    assert registry.get("validity_filter").version == 99


def test_template_header_validation(tmp_path):
    (tmp_path / "broken.txt").write_text("id: broken\n---\nno headers\n")
    with pytest.raises(ValidationError):
        TemplateRegistry(extra_dir=tmp_path)


def test_undeclared_placeholder_rejected(tmp_path):
    (tmp_path / "bad.txt").write_text(
        "id: bad\nversion: 1\nstage: e2e\nslots: question\n---\n{question} {sneaky}\n"
    )
    with pytest.raises(ValidationError):
        TemplateRegistry(extra_dir=tmp_path)
