import pytest

from rvector.config import ConfigError, Settings, load_config, parse_config
from rvector.constants import DEFAULT_TOP_K, CohortMode, EnrollStrategy


def test_defaults():
    settings = load_config()
    assert settings == Settings()
    assert settings.top_k == DEFAULT_TOP_K
    assert settings.strategy is EnrollStrategy.EmbAvg
    assert settings.asnorm is True
    assert settings.cohort_mode is CohortMode.Adaptive
    assert settings.fusion_weights is None


def test_load_config(tmp_path):
    path = tmp_path / "rvector.conf"
    path.write_text(
        "# scoring\n"
        "top_k = 300\n"
        "strategy=score-avg  # per-utterance scores\n"
        "\n"
        "asnorm = off\n"
        "cohort_mode = fixed\n"
        "fusion_weights = 0.3, 0.7\n"
        "p_target = 0.05\n"
    )
    settings = load_config(str(path))
    assert settings.top_k == 300
    assert settings.strategy is EnrollStrategy.ScoreAvg
    assert settings.asnorm is False
    assert settings.cohort_mode is CohortMode.Fixed
    assert settings.fusion_weights == (0.3, 0.7)
    assert settings.dcf_params.p_target == 0.05


@pytest.mark.parametrize(
    "text, match",
    (
        pytest.param(
            "top_k = 5\ncolour = blue\n",
            "<config>:2: unknown key 'colour'",
            id="unknown",
        ),
        pytest.param("top_k 5\n", "<config>:1: expecting key=value", id="no equals"),
    ),
)
def test_parse_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


@pytest.mark.parametrize(
    "text",
    (
        pytest.param("top_k = 1\n", id="top_k below 2"),
        pytest.param("asnorm = maybe\n", id="boolean"),
        pytest.param("strategy = best\n", id="strategy"),
        pytest.param("batch_size = 0\n", id="batch size"),
    ),
)
def test_invalid_values(tmp_path, text):
    path = tmp_path / "bad.conf"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_evolve_from_skips_unset_and_foreign_keys():
    base = Settings(top_k=100)
    settings = base.evolve_from(
        {"top_k": None, "seed": 7, "strategy": "utt-concat", "command": "score"}
    )
    assert settings.top_k == 100
    assert settings.seed == 7
    assert settings.strategy is EnrollStrategy.UttConcat
