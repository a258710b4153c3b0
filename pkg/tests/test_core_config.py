"""
Tests for core configuration module.
"""

from pathlib import Path

from app.core.config import Settings, get_settings


class TestSettings:
    """Test configuration settings."""

    def test_settings_singleton(self):
        """Test that get_settings returns the same instance."""
        assert get_settings() is get_settings()

    def test_default_values(self, monkeypatch):
        """Test default configuration values."""
        for name in ("DATA_DIR", "OUTPUT_DIR", "RUN_AUDIT_DATABASE_URL", "WORKERS"):
            monkeypatch.delenv(name, raising=False)
        settings = Settings(_env_file=None)

        assert settings.app_name == "CBSF Group Recommender"
        assert settings.log_level == "INFO"
        assert settings.workers == 1
        assert settings.default_seed == 42
        assert settings.run_audit_enabled is True
        assert settings.data_dir == "./data"

    def test_environment_overrides(self, tmp_path, isolated_settings):
        """Test that environment variables reach the cached settings."""
        assert isolated_settings.data_path == tmp_path
        assert isolated_settings.output_path == tmp_path / "outputs"
        assert isolated_settings.run_audit_database_url.endswith("runs.db")

    def test_workers_from_environment(self, monkeypatch):
        """Test that numeric fields are parsed from the environment."""
        monkeypatch.setenv("WORKERS", "8")
        get_settings.cache_clear()
        assert get_settings().workers == 8

    def test_settings_types(self):
        """Test that settings have correct types."""
        settings = get_settings()

        assert isinstance(settings.app_name, str)
        assert isinstance(settings.debug, bool)
        assert isinstance(settings.workers, int)
        assert isinstance(settings.data_path, Path)
        assert isinstance(settings.run_audit_database_url, str)
