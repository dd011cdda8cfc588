import pytest

from utils.config import load_config


def test_defaults(monkeypatch):
    for name in ("CQI_SEED", "CQI_THREADS", "CQI_COVER_BOUND"):
        monkeypatch.delenv(name, raising=False)
    config = load_config()
    assert config.seed == 0
    assert config.threads == 1
    assert config.cover_bound == 2.0


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("CQI_SEED", "7")
    monkeypatch.setenv("CQI_THREADS", "0")
    monkeypatch.setenv("CQI_VERTEX_COVER_BOUND", "3")
    config = load_config()
    assert config.seed == 7
    assert config.threads == 1
    assert config.vertex_cover_bound == 3


@pytest.mark.parametrize(
    "name, value",
    [("CQI_SEED", "seven"), ("CQI_COVER_BOUND", "wide"), ("CQI_COLORCODE_FAILURE", "1.5")],
)
def test_invalid_values(monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    with pytest.raises(ValueError):
        load_config()
