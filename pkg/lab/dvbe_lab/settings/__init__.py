# Settings package: select a module with DVBE_SETTINGS_MODULE
