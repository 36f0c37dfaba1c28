import dataclasses
import os
import typing
import warnings

from nectfuse.exceptions import ConfigError


class Undefined(object):
    pass


class Config(object):
    """Flat ``key = value`` settings, overridable from ``NECTFUSE_<KEY>`` variables."""

    def __init__(
        self,
        env_file: str = None,
        environ: typing.Mapping[str, str] = None,
        env_prefix: str = "NECTFUSE_",
    ) -> None:
        self.environ = os.environ if environ is None else environ
        self.env_prefix = env_prefix
        self.file_values = {}
        if env_file is not None:
            self.file_values = self._load_from(env_file)

    def _load_from(self, load_file: str, file_type: str = "env") -> dict:
        if not os.path.exists(load_file):
            return {}

        load_fn = f"_load_from_{file_type}"
        if not hasattr(self, load_fn):
            return {}  # pragma: nocover

        return getattr(self, load_fn)(load_file)

    def _load_from_env(self, load_file: str) -> dict:
        file_values = {}
        with open(load_file) as ifile:
            for line in ifile.readlines():
                if line.lstrip().startswith("#"):
                    continue
                if "=" in line and not line.startswith("="):
                    key, value = line.split("=", 1)
                    key = key.strip()
                    value = value.strip().strip("\"'")
                    file_values[key] = value
        return file_values

    def _env_key(self, key: str) -> str:
        return f"{self.env_prefix}{key.upper()}"

    def __contains__(self, key: str) -> bool:
        return self._env_key(key) in self.environ or key in self.file_values

    def keys(self) -> typing.List[str]:
        return list(self.file_values.keys())

    def get(
        self, key: str, cast: typing.Callable = None, default: typing.Any = Undefined
    ) -> typing.Any:
        env_key = self._env_key(key)
        if env_key in self.environ:
            return self._cast(
                key=key, value=self.environ[env_key], cast=cast, default=default
            )

        if key in self.file_values:
            return self._cast(
                key=key, value=self.file_values[key], cast=cast, default=default
            )

        if default is not Undefined:
            return default

        raise KeyError(f"'Config '{key}' is missing, and has no default'")

    def _cast(
        self,
        key: str,
        value: typing.Any,
        cast: typing.Callable = None,
        default: typing.Any = Undefined,
    ) -> typing.Any:
        if cast is None:
            return value
        elif cast is bool and isinstance(value, str):
            _bool_map = {
                "true": True,
                "1": True,
                "false": False,
                "0": False,
            }
            if value.lower() not in _bool_map:
                raise ConfigError(
                    f'Config "{key}" has value "{value}". ' "But not a valid bool",
                    key=key,
                )
            return _bool_map[value.lower()]

        try:
            return cast(value)
        except (TypeError, ValueError):
            raise ConfigError(
                f'Config "{key}" has value "{value}". '
                f"But not a valid {getattr(cast, '__name__', cast)}",
                key=key,
            )


class ConfigSection(object):
    """Mixin for frozen dataclasses that are filled from a ``Config``.

    Each field is looked up by its own name. The cast comes from the field
    metadata (``field(metadata={"cast": ...})``) or from the type of its
    default value.
    """

    @classmethod
    def from_config(cls, config: Config, **overrides: typing.Any) -> typing.Any:
        values = {}
        names = set()
        for field in dataclasses.fields(cls):
            names.add(field.name)
            if field.name in overrides:
                continue
            if field.name not in config:
                continue
            default = _field_default(field)
            cast = field.metadata.get("cast")
            if cast is None and isinstance(default, (bool, int, float, str)):
                cast = type(default)
            values[field.name] = config.get(field.name, cast=cast)

        for key in config.keys():
            if key not in names:
                warnings.warn(f"config key `{key}` is not used by {cls.__name__}")

        values.update(overrides)
        return cls(**values)

    def as_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            key: list(value) if isinstance(value, tuple) else value
            for key, value in dataclasses.asdict(self).items()
        }


def _field_default(field: dataclasses.Field) -> typing.Any:
    if field.default is not dataclasses.MISSING:
        return field.default
    if field.default_factory is not dataclasses.MISSING:
        return field.default_factory()
    return None
