#!/usr/bin/env python3

import os
from typing import Dict, List, Optional, Tuple
from dataclasses import dataclass, field

from dotenv import load_dotenv

from .exceptions import ConfigurationError
from .validation import validate_lang_id

DEFAULT_LANG_IDS = ["hin_Deva", "mar_Deva", "eng_Latn"]


@dataclass
class Settings:
    """Workbench-wide settings shared by the corpus, QE and model layers."""
    lang_ids: List[str] = field(default_factory=lambda: list(DEFAULT_LANG_IDS))
    sep_token: str = "<sep>"
    da_range: Tuple[float, float] = (0.0, 100.0)
    log_level: str = "INFO"
    seed: int = 17
    translator_url: Optional[str] = None
    translator_command: Optional[str] = None


class SettingsManager:
    """Loads settings from the environment with optional .env support."""

    def __init__(self, env_file: Optional[str] = None):
        self._settings: Optional[Settings] = None
        self._env_prefix = "APE_"
        self._env_file = env_file

    def _get(self, name: str) -> Optional[str]:
        value = os.getenv(f"{self._env_prefix}{name}")
        return value.strip() if value is not None and value.strip() else None

    def load(self) -> Settings:
        """Read APE_* variables (after loading the optional env file)."""
        if self._env_file:
            load_dotenv(self._env_file, override=False)
        else:
            load_dotenv(override=False)

        settings = Settings()
        lang_ids = self._get("LANG_IDS")
        if lang_ids:
            settings.lang_ids = [code.strip() for code in lang_ids.split(",") if code.strip()]
        sep = self._get("SEP_TOKEN")
        if sep:
            settings.sep_token = sep
        da_min, da_max = self._get("DA_MIN"), self._get("DA_MAX")
        try:
            if da_min is not None or da_max is not None:
                settings.da_range = (
                    float(da_min) if da_min is not None else settings.da_range[0],
                    float(da_max) if da_max is not None else settings.da_range[1],
                )
            seed = self._get("SEED")
            if seed is not None:
                settings.seed = int(seed)
        except ValueError as e:
            raise ConfigurationError(f"Invalid numeric setting: {str(e)}")
        settings.log_level = (self._get("LOG_LEVEL") or settings.log_level).upper()
        settings.translator_url = self._get("TRANSLATOR_URL")
        settings.translator_command = self._get("TRANSLATOR_COMMAND")

        self._settings = settings
        self.validate_settings()
        return settings

    def get_settings(self) -> Settings:
        """Get the current settings, loading them on first use."""
        if self._settings is None:
            return self.load()
        return self._settings

    def clear_settings(self):
        """Forget loaded settings."""
        self._settings = None

    def validate_settings(self) -> bool:
        """Validate the current settings."""
        if not self._settings:
            return False
        settings = self._settings
        if not settings.lang_ids:
            raise ConfigurationError("At least one LangId must be declared")
        for code in settings.lang_ids:
            validate_lang_id(code)
        if len(set(settings.lang_ids)) != len(settings.lang_ids):
            raise ConfigurationError(f"Duplicate LangIds declared: {settings.lang_ids}")
        if settings.sep_token in settings.lang_ids:
            raise ConfigurationError("sep token must differ from every LangId")
        if settings.da_range[0] >= settings.da_range[1]:
            raise ConfigurationError(f"Invalid DA range: {settings.da_range}")
        return True

    def as_dict(self) -> Dict[str, object]:
        """Settings as a JSON-friendly dictionary for manifests."""
        settings = self.get_settings()
        return {
            "lang_ids": list(settings.lang_ids),
            "sep_token": settings.sep_token,
            "da_range": list(settings.da_range),
            "seed": settings.seed,
        }
