"""
Lazy access to the active settings module.

The module is chosen by DVBE_SETTINGS_MODULE and imported on first attribute
access, so entry points can set the variable before anything reads settings.
"""
import importlib
import os
import threading

ENVIRONMENT_VARIABLE = "DVBE_SETTINGS_MODULE"
DEFAULT_SETTINGS_MODULE = "dvbe_lab.settings.local"


class LazySettings:
    def __init__(self):
        self._wrapped = None
        self._lock = threading.Lock()

    def _setup(self):
        module_name = os.environ.get(ENVIRONMENT_VARIABLE, DEFAULT_SETTINGS_MODULE)
        self._wrapped = importlib.import_module(module_name)

    def __getattr__(self, name):
        if name.startswith("_"):
            raise AttributeError(name)
        if self._wrapped is None:
            with self._lock:
                if self._wrapped is None:
                    self._setup()
        return getattr(self._wrapped, name)

    @property
    def configured(self) -> bool:
        return self._wrapped is not None

    def reset(self):
        """Forget the loaded module (tests switch DVBE_SETTINGS_MODULE)."""
        self._wrapped = None


settings = LazySettings()
