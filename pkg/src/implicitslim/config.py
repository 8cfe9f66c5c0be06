"""Flat key=value run configuration with flag overrides and optional grids.

Config files hold one ``key=value`` pair per line (``#`` comments allowed);
command-line flags override file values. Numeric hyperparameters may carry
comma-separated grid lists, but only commands that sweep accept them --
everywhere else a grid value is a configuration error.
"""

from .errors import ConfigError


def _parse_int(text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_float(text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _parse_bool(text):
    lowered = str(text).strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


#: key -> (value parser, grid lists allowed)
SCHEMA = {
    "latent_dim": (_parse_int, True),
    "lambda": (_parse_float, True),
    "alpha": (_parse_float, True),
    "r_p": (_parse_float, True),
    "r_q": (_parse_float, True),
    "s_q": (_parse_float, True),
    "norm_exponent": (_parse_float, True),
    "popularity_threshold": (_parse_int, True),
    "repeat": (_parse_int, True),
    "max_iters": (_parse_int, True),
    "seed": (_parse_int, False),
    "setup": (str, False),
    "use_bias": (_parse_bool, False),
    "ks": (_parse_int, None),  # always a list
}


def _parse_value(key, raw):
    if key not in SCHEMA:
        raise ConfigError(f"unknown configuration key {key!r}")
    parser, sweepable = SCHEMA[key]
    if isinstance(raw, (int, float, bool, list)):
        return raw
    parts = [part.strip() for part in str(raw).split(",") if part.strip()]
    if not parts:
        raise ConfigError(f"empty value for key {key!r}")
    if sweepable is None:  # list-valued key
        return [parser(part) for part in parts]
    if len(parts) == 1:
        return parser(parts[0])
    if not sweepable:
        raise ConfigError(f"key {key!r} does not accept a grid list")
    return [parser(part) for part in parts]


def parse_config_file(path):
    """Read a key=value file into a raw string mapping."""
    raw = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(
                    f"{path}:{line_no}: expected key=value, got {stripped!r}"
                )
            key, value = stripped.split("=", 1)
            raw[key.strip()] = value.strip()
    return raw


class RunConfig:
    """Validated hyperparameter set; file values overridden by flags."""

    def __init__(self, file_values=None, overrides=None):
        merged = dict(file_values or {})
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value
        self._values = {
            key: _parse_value(key, raw) for key, raw in merged.items()
        }

    def __contains__(self, key):
        return key in self._values

    def scalar(self, key, default=None):
        """Single value for ``key``; a grid list here is a config error."""
        if key not in self._values:
            return default
        value = self._values[key]
        if isinstance(value, list) and SCHEMA[key][1] is not None:
            raise ConfigError(
                f"key {key!r} has a grid list; this command does not sweep"
            )
        return value

    def grid(self, key, default=None):
        """Value for ``key`` as a list, wrapping scalars."""
        if key not in self._values:
            return [default] if default is not None else []
        value = self._values[key]
        return value if isinstance(value, list) else [value]

    def sweep_axes(self):
        """(key, values) pairs for every key holding a grid list."""
        return [
            (key, value)
            for key, value in sorted(self._values.items())
            if isinstance(value, list) and SCHEMA[key][1] is not None
        ]
