import numpy as np
import pytest

from surrotext import captions as cap
from surrotext import simulators as sim
from surrotext.schema import AttributeSchema, AttributeSpec
from surrotext.validation import ContractViolation


@pytest.fixture(scope="module")
def toy_schema():
    return AttributeSchema(name="toy", specs=(
        AttributeSpec("A", "numeric"),
        AttributeSpec("B", "categorical", ("blue", "red")),
    ))


def building(seed=0):
    return sim.sample_system("building", seed)


def building_caption(seed=0, length="medium", style="objective", **render_kw):
    attrs = building(seed)
    include = list(sim.CAUSAL_BUILDING_ATTRIBUTES)
    return cap.render_nl(attrs, length, style, seed + 1000,
                         schema=sim.building_schema(), include=include,
                         system_id=f"b{seed}", **render_kw)


class TestRenderKv:
    def test_reference_string(self, toy_schema):
        out = cap.render_kv({"A": 1.0, "B": "blue"}, toy_schema)
        assert out.text == "A:1.0|B:blue"

    def test_single_attribute_has_no_separator(self, toy_schema):
        out = cap.render_kv({"A": 1.0, "B": "blue"}, toy_schema, include=["A"])
        assert "|" not in out.text
        assert out.coverage == {"A": "present", "B": "omitted"}

    def test_large_numbers_comma_grouped(self):
        attrs = building(3)
        attrs["sqft"] = 200_000
        out = cap.render_kv(attrs, sim.building_schema())
        assert "200,000" in out.text

    def test_separator_count_matches_attribute_count(self):
        attrs = building(1)
        out = cap.render_kv(attrs, sim.building_schema(),
                            include=list(sim.CAUSAL_BUILDING_ATTRIBUTES))
        assert out.text.count("|") == len(sim.CAUSAL_BUILDING_ATTRIBUTES) - 1

    def test_parse_round_trip(self):
        attrs = building(7)
        rendered = cap.render_kv(attrs, sim.building_schema())
        parsed = cap.parse_kv(rendered.text)
        assert set(parsed) == set(attrs)
        for name, surface in rendered.surfaces.items():
            assert parsed[name] == surface

    def test_empty_include_rejected(self, toy_schema):
        with pytest.raises(ContractViolation):
            cap.render_kv({"A": 1.0, "B": "blue"}, toy_schema, include=[])


class TestRenderNl:
    def test_deterministic(self):
        a, b = building_caption(5), building_caption(5)
        assert a.text == b.text

    @pytest.mark.parametrize("length,lo,hi", [("short", 2, 3), ("medium", 4, 6),
                                              ("long", 7, 9)])
    def test_sentence_counts(self, length, lo, hi):
        for seed in range(30):
            text = building_caption(seed, length=length).text
            assert lo <= cap.count_sentences(text) <= hi, text

    def test_different_seeds_differ(self):
        distinct = 0
        for seed in range(100):
            a = building_caption(seed)
            b = cap.render_nl(a.attributes, "medium", "objective", 999_000 + seed,
                              schema=sim.building_schema(),
                              include=list(sim.CAUSAL_BUILDING_ATTRIBUTES))
            assert a.coverage == b.coverage
            if a.text != b.text:
                distinct += 1
        assert distinct > 95

    def test_every_value_surface_appears(self):
        table = cap.builtin_building_synonyms()
        for seed in range(50):
            rendered = building_caption(seed)
            for name in rendered.present_attributes():
                options = cap.value_surfaces(name, rendered.attributes[name],
                                             synonyms=table)
                assert any(s in rendered.text for s in options), (name, rendered.text)

    def test_styles_change_text(self):
        texts = {style: cap.render_nl(building(2), "medium", style, 42,
                                      schema=sim.building_schema(),
                                      include=list(sim.CAUSAL_BUILDING_ATTRIBUTES)).text
                 for style in cap.STYLE_TAGS}
        assert len(set(texts.values())) >= 3

    def test_windfarm_grammar(self):
        attrs = sim.sample_system("windfarm", 8)
        rendered = cap.render_nl(attrs, "medium", "classroom", 17,
                                 schema=sim.windfarm_schema())
        assert 4 <= cap.count_sentences(rendered.text) <= 6
        assert str(attrs["num_turbines"]) in rendered.text

    def test_unknown_style_rejected(self):
        with pytest.raises(ContractViolation):
            cap.render_nl(building(0), "medium", "poetic", 0)

    def test_single_story_humanized(self):
        attrs = building(0)
        attrs["num_stories"] = 1
        rendered = cap.render_nl(attrs, "medium", "objective", 5,
                                 schema=sim.building_schema(),
                                 include=list(sim.CAUSAL_BUILDING_ATTRIBUTES))
        assert "single-story" in rendered.text


class TestCorrupt:
    def test_rate_zero_is_noop(self):
        original = building_caption(3)
        assert cap.corrupt(original, 0.0, 99).text == original.text

    def test_rate_one_flags_everything(self):
        rendered = building_caption(4)
        corrupted = cap.corrupt(rendered, 1.0, 5)
        assert all(corrupted.coverage[a] in ("omitted", "corrupted")
                   for a in rendered.present_attributes())

    def test_corruption_fraction_calibrated(self):
        # binomial count over the attributes that were present pre-corruption
        total = flagged = 0
        for base_seed in range(250):
            rendered = building_caption(base_seed)
            present = rendered.present_attributes()
            for k in range(20):
                corrupted = cap.corrupt(rendered, 0.10, base_seed * 1000 + k)
                total += len(present)
                flagged += sum(1 for a in present
                               if corrupted.coverage[a] != "present")
        assert abs(flagged / total - 0.10) <= 0.01

    def test_kv_input_rejected(self):
        kv = cap.render_kv(building(0), sim.building_schema())
        with pytest.raises(ContractViolation):
            cap.corrupt(kv, 0.5, 0)

    def test_swap_only_mode_keeps_attributes_in_text(self):
        rendered = building_caption(6)
        corrupted = cap.corrupt(rendered, 1.0, 7, swap_fraction=1.0)
        assert all(corrupted.coverage[a] == "corrupted"
                   for a in rendered.present_attributes())


class TestSubstituteSynonym:
    def test_warehouse_synonym(self):
        attrs = building(0)
        attrs["building_type"] = "Warehouse"
        # render with synonyms disabled so the canonical surface is used
        rendered = cap.render_nl(attrs, "medium", "objective", 3,
                                 schema=sim.building_schema(),
                                 include=list(sim.CAUSAL_BUILDING_ATTRIBUTES),
                                 synonyms=cap.SynonymTable({}))
        swapped = cap.substitute_synonym(rendered, "building_type",
                                         cap.builtin_building_synonyms(),
                                         "synonym", 0)
        assert "StorageFacility" in swapped.text
        assert "Warehouse" not in swapped.text

    def test_remove_sets_omitted_flag(self):
        rendered = building_caption(9)
        removed = cap.substitute_synonym(rendered, "building_type",
                                         cap.builtin_building_synonyms(),
                                         "remove", 0)
        assert removed.coverage["building_type"] == "omitted"
        surfaces = cap.value_surfaces("building_type", rendered.attributes["building_type"],
                                      synonyms=cap.builtin_building_synonyms())
        assert not any(s in removed.text for s in surfaces)

    def test_randomize_never_returns_original(self):
        rendered = building_caption(10)
        original_type = rendered.attributes["building_type"]
        for seed in range(1000):
            randomized = cap.substitute_synonym(
                rendered, "building_type", cap.builtin_building_synonyms(),
                "randomize", seed)
            assert randomized.attributes["building_type"] != original_type

    def test_kv_remove_drops_pair(self):
        kv = cap.render_kv(building(1), sim.building_schema(),
                           include=list(sim.CAUSAL_BUILDING_ATTRIBUTES))
        removed = cap.substitute_synonym(kv, "vintage",
                                         cap.builtin_building_synonyms(), "remove", 0)
        assert "vintage:" not in removed.text
        assert removed.text.count("|") == kv.text.count("|") - 1

    def test_absent_attribute_rejected(self):
        rendered = building_caption(11)
        removed = cap.substitute_synonym(rendered, "building_type",
                                         cap.builtin_building_synonyms(), "remove", 0)
        with pytest.raises(ContractViolation):
            cap.substitute_synonym(removed, "building_type",
                                   cap.builtin_building_synonyms(), "synonym", 0)


class TestPrompt:
    def test_contains_all_literals_and_no_tags(self):
        template = cap.PromptTemplate(ces="buildings", style="with an objective tone",
                                      num_sentences="4-6")
        prompt = cap.build_prompt(building(0), template, schema=sim.building_schema())
        assert "buildings" in prompt
        assert "with an objective tone" in prompt
        assert "4-6" in prompt
        assert "should NOT be a list of attributes" in prompt
        assert "<" not in prompt

    def test_wind_styles(self):
        template = cap.PromptTemplate(ces="wind farms", style="to a classroom",
                                      num_sentences="4-6")
        prompt = cap.build_prompt(sim.sample_system("windfarm", 0), template,
                                  schema=sim.windfarm_schema())
        assert "to a classroom" in prompt

    def test_empty_attributes_rejected(self):
        template = cap.PromptTemplate(ces="buildings", style="plain", num_sentences="2-3")
        with pytest.raises(ContractViolation):
            cap.build_prompt({}, template)

    def test_empty_slot_rejected(self):
        template = cap.PromptTemplate(ces="", style="plain", num_sentences="2-3")
        with pytest.raises(ContractViolation):
            cap.build_prompt(building(0), template)


class TestSynonymTable:
    def test_collision_detection(self):
        with pytest.raises(ContractViolation):
            cap.SynonymTable({"building_type": {"Warehouse": ["Hospital"]}},
                             schema=sim.building_schema())

    def test_builtin_covers_all_types(self):
        table = cap.builtin_building_synonyms()
        for t in sim.BUILDING_TYPES:
            assert table.lookup("building_type", t)

    def test_round_trip(self):
        table = cap.builtin_building_synonyms()
        again = cap.SynonymTable.from_json(table.to_json())
        assert again.lookup("building_type", "Warehouse") == ["StorageFacility"]
