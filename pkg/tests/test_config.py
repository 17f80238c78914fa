import pytest

from distner.config import (
    DEFAULT_CONFIG_TEXT,
    AugmentConfig,
    DataConfig,
    ModelConfig,
    TrainRecipe,
    load_recipe,
    parse_recipe,
    with_seed,
    write_default_config,
)
from distner.errors import ConfigError
from distner.model import Vocabulary, SPECIAL_TOKENS


def test_default_text_parses_to_default_recipe():
    assert parse_recipe(DEFAULT_CONFIG_TEXT) == TrainRecipe()


def test_empty_text_is_all_defaults():
    assert parse_recipe("") == TrainRecipe()


def test_write_default_config_round_trips(tmp_path):
    path = tmp_path / "default.ini"
    write_default_config(path)
    assert load_recipe(path) == TrainRecipe()


def test_section_values_land_in_dataclasses():
    recipe = parse_recipe(
        """
[robust]
q = 0.5
passes = 7

[data]
mode = files
entity_types = PER LOC ORG
case_sensitive = false

[run]
seed = 11
"""
    )
    assert recipe.robust.q == 0.5
    assert recipe.robust.passes == 7
    assert recipe.robust.tau == 0.7  # untouched default
    assert recipe.data.mode == "files"
    assert recipe.data.entity_types == ("PER", "LOC", "ORG")
    assert recipe.data.case_sensitive is False
    assert recipe.seed == 11


def test_inline_comments_are_stripped():
    recipe = parse_recipe("[robust]\nq = 0.5  # reason\n")
    assert recipe.robust.q == 0.5


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match=r"\[training\]"):
        parse_recipe("[training]\nlr = 1\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="learning_rate"):
        parse_recipe("[robust]\nlearning_rate = 1\n")
    with pytest.raises(ConfigError, match=r"\[run\]"):
        parse_recipe("[run]\nseeds = 3\n")


def test_bad_value_types_rejected():
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_recipe("[robust]\npasses = many\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_recipe("[data]\ncase_sensitive = maybe\n")


def test_malformed_ini_rejected():
    with pytest.raises(ConfigError, match="malformed"):
        parse_recipe("robust]\nq=1\n")


def test_overrides_apply_on_top_of_text():
    recipe = parse_recipe(
        "[robust]\nq = 0.5\n",
        overrides=("robust.q=0.9", "bench.train_size=10", "run.seed=4"),
    )
    assert recipe.robust.q == 0.9
    assert recipe.bench.train_size == 10
    assert recipe.seed == 4


def test_override_shape_validation():
    with pytest.raises(ConfigError, match="section.key=value"):
        parse_recipe("", overrides=("robust=1",))
    with pytest.raises(ConfigError, match="section.key=value"):
        parse_recipe("", overrides=("justakey",))


def test_override_unknown_target_rejected():
    with pytest.raises(ConfigError):
        parse_recipe("", overrides=("robust.nope=1",))
    with pytest.raises(ConfigError):
        parse_recipe("", overrides=("nowhere.q=1",))


def test_load_recipe_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_recipe(tmp_path / "absent.ini")


def test_with_seed():
    recipe = TrainRecipe()
    assert with_seed(recipe, None) is recipe
    assert with_seed(recipe, 9).seed == 9
    assert recipe.seed == 0


def test_data_mode_validation():
    with pytest.raises(ConfigError, match="data.mode"):
        DataConfig(mode="remote")


def test_model_kind_validation():
    with pytest.raises(ConfigError, match="model.kind"):
        ModelConfig(kind="bert")


def test_adapter_validation():
    with pytest.raises(ConfigError, match="augment.adapter"):
        AugmentConfig(adapter="external-api")


def test_encoder_spec_carries_model_fields():
    vocab = Vocabulary(SPECIAL_TOKENS + ("a", "b"))
    spec = ModelConfig(hidden_size=32, num_layers=1, num_heads=2, max_len=16).encoder_spec(vocab)
    assert spec.hidden_size == 32
    assert spec.num_layers == 1
    assert spec.max_len == 16
    assert spec.vocab is vocab


def test_metadata_strings():
    meta = TrainRecipe().metadata()
    assert meta["recipe.q"] == "0.7"
    assert meta["recipe.num_members"] == "5"
    assert meta["seed"] == "0"
    assert all(isinstance(v, str) for v in meta.values())
