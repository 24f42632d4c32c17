import pytest

from config import Config


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in ("TDIFF_CONFIG", "TDIFF_OUT_DIR", "TDIFF_SEED", "LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def preset_a():
    return Config(preset="a").experiment()


@pytest.fixture
def preset_b():
    return Config(preset="b").experiment()


@pytest.fixture
def preset_c():
    return Config(preset="c").experiment()


@pytest.fixture
def write_config(tmp_path):
    def write(text: str):
        path = tmp_path / "run.ini"
        path.write_text(text, encoding="utf-8")
        return str(path)

    return write
