from pathlib import Path

import pytest

from barsrate.config import CONFIG_ENV_VAR, PipelineConfig, load_config, parse_assignments, resolve_config_path
from barsrate.errors import InvalidParameter
from barsrate.model import ModelSettings

REPO_CONFIG = Path(__file__).resolve().parent.parent / "config" / "pipeline.env"


class TestPipelineConfig:
    """Тесты параметров пайплайна"""

    def test_defaults(self):
        """Тест значений по умолчанию"""
        config = PipelineConfig()
        assert config.conf_floor == 0.2
        assert (config.fwd_frac, config.bwd_frac) == (0.6, 0.4)
        assert config.window == 5
        assert config.apen_m == 3

    def test_even_window(self):
        """Тест отказа для четного окна"""
        with pytest.raises(ValueError):
            PipelineConfig(window=4)

    def test_thresholds_order(self):
        """Тест отказа для порога назад выше порога вперед"""
        with pytest.raises(ValueError):
            PipelineConfig(fwd_frac=0.4, bwd_frac=0.6)

    def test_unknown_key(self):
        """Тест отказа для неизвестного параметра"""
        with pytest.raises(ValueError):
            PipelineConfig(unknown=1)

    def test_model_settings(self):
        """Тест переноса параметров модели"""
        settings = ModelSettings.from_config(PipelineConfig(grid_size=7, seed=3))
        assert settings.grid_size == 7
        assert settings.seed == 3


class TestLoadConfig:
    """Тесты загрузки конфигурации"""

    def test_repo_file_matches_defaults(self):
        """Тест совпадения файла в репозитории со значениями по умолчанию"""
        assert load_config(REPO_CONFIG) == PipelineConfig()

    def test_file_and_overrides(self, tmp_path):
        """Тест приоритета переопределений над файлом"""
        path = tmp_path / "c.env"
        path.write_text("# комментарий\nWINDOW=7\nSTABILIZE=false\nSEED=4\n")
        config = load_config(path, {"seed": "9"})
        assert config.window == 7
        assert config.stabilize is False
        assert config.seed == 9

    def test_env_variable(self, tmp_path, monkeypatch):
        """Тест пути из переменной окружения"""
        path = tmp_path / "c.env"
        path.write_text("apen_mode=per_cycle\n")
        monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
        assert resolve_config_path() == path
        assert load_config().apen_mode == "per_cycle"

    def test_no_file(self, monkeypatch):
        """Тест конфигурации без файла"""
        monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
        assert load_config() == PipelineConfig()

    def test_missing_file(self, tmp_path):
        """Тест ошибки для отсутствующего файла"""
        with pytest.raises(InvalidParameter):
            load_config(tmp_path / "none.env")

    def test_invalid_value(self):
        """Тест ошибки для значения вне области"""
        with pytest.raises(InvalidParameter):
            load_config(overrides={"top_fraction": "1.5"})

    def test_negative_seed(self):
        """Тест отказа для отрицательного seed"""
        with pytest.raises(InvalidParameter):
            load_config(overrides={"seed": -1})


class TestAssignments:
    """Тесты разбора --set"""

    def test_parse(self):
        """Тест разбора пар ключ=значение"""
        assert parse_assignments(["window=7", " seed = 2 ", "apen_mode=a=b"]) == {
            "window": "7", "seed": "2", "apen_mode": "a=b",
        }

    def test_missing_equals(self):
        """Тест отказа без знака равенства"""
        with pytest.raises(InvalidParameter):
            parse_assignments(["window"])
