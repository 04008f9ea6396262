"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration (register size, weights, scene parameters, CLI flags)."""


class SceneLoadError(ConfigError):
    """A scene document could not be parsed or failed validation."""
