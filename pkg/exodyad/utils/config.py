import configparser
import hashlib
import io
import math
import re
from abc import ABCMeta
from dataclasses import dataclass, asdict
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from exodyad.utils.exception import ConfigError, ERROR_STRATEGIES
from exodyad.utils.types import PathType

CONFIG_HEADER = """\
# exodyad configuration
# Units are SI throughout: m, kg, kg*m^2, s, rad, rad/s, N*m, N*m/rad, N*m*s/rad.
# Angles: hip flexion from the downward vertical (positive forward), knee flexion positive.
"""

_SECTION_PATTERN = re.compile(r'^\s*\[(?P<name>[^\]]+)\]')
_OPTION_PATTERN = re.compile(r'^\s*(?P<key>[^=:#;\s][^=:]*?)\s*[=:]')


class BaseConfig(metaclass=ABCMeta):
    """
    Base configuration class, to be inherited by specific configuration dataclasses.
    Contains a method to convert configuration object to a dictionary.
    """

    def to_dict(self):
        """Convert the dataclass to a dictionary."""
        return asdict(self)


@dataclass(frozen=True)
class AnalysisConfig(BaseConfig):
    """Configuration for the analysis pipeline."""

    stride_samples: int = 100
    trim_seconds: float = 1.0
    area_mode: str = 'hull'
    pooled_area: bool = False
    lag_mode: str = 'signed'
    heel_strike_prominence: float = 0.02
    min_spacing_fraction: float = 0.5
    force_threshold: float = 20.0
    nominal_cycle_s: float = 4.0
    detect_from_trajectory: bool = False
    write_strides: bool = False
    error_strategy: str = 'log'
    display_progress_bar: bool = False

    def __post_init__(self):
        if self.stride_samples < 2:
            raise ConfigError(f"stride_samples must be >= 2, got {self.stride_samples}")
        if not self.nominal_cycle_s > 0:
            raise ConfigError(f"nominal_cycle_s must be positive, got {self.nominal_cycle_s}")
        if self.trim_seconds < 0:
            raise ConfigError(f"trim_seconds must be >= 0, got {self.trim_seconds}")
        if self.area_mode not in ('hull', 'shoelace'):
            raise ConfigError(f"area_mode must be 'hull' or 'shoelace', got '{self.area_mode}'")
        if self.lag_mode not in ('signed', 'abs'):
            raise ConfigError(f"lag_mode must be 'signed' or 'abs', got '{self.lag_mode}'")
        if self.error_strategy not in ERROR_STRATEGIES:
            raise ConfigError(f"error_strategy must be one of {ERROR_STRATEGIES}")


def format_value(value) -> str:
    """Formats a config value so that reading it back reproduces it exactly."""
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Enum):
        return str(value.value)
    return str(value)


def _index_lines(text: str) -> Dict[Tuple[str, str], int]:
    """Maps (section, option) to the 1-based line where the option is defined."""
    lines = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in '#;':
            continue
        if match := _SECTION_PATTERN.match(line):
            section = match.group('name').strip()
            lines[(section, '')] = number
        elif section is not None and (match := _OPTION_PATTERN.match(line)):
            lines[(section, match.group('key').strip())] = number
    return lines


class ConfigFile:
    """INI text with typed, validated lookups that report file and line on failure.

    Every option read through a getter is marked as used, so `check_unused` can reject
    misspelled or unknown keys after a loader has consumed the sections it knows.
    """

    def __init__(self, text: str, source: str = '<string>', base_dir: PathType = None):
        self.parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'))
        self.parser.optionxform = str
        try:
            self.parser.read_string(text, source=source)
        except configparser.Error as e:
            raise ConfigError(f"{source}: {e}") from e
        self.source = source
        self.base_dir = Path(base_dir) if base_dir is not None else None
        self.lines: Dict[Tuple[str, str], str] = {key: f"{source}:{number}"
                                                  for key, number in _index_lines(text).items()}
        self.used: Set[Tuple[str, str]] = set()

    @classmethod
    def from_path(cls, path: PathType) -> 'ConfigFile':
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        return cls(text, source=str(path), base_dir=path.parent)

    def apply_overrides(self, overrides: Optional[Sequence[str]]):
        """Applies dotted `section.key=value` overrides; the section may itself contain dots."""
        for item in overrides or ():
            key, sep, value = item.partition('=')
            section, _, option = key.strip().rpartition('.')
            if not sep or not section or not option:
                raise ConfigError(f"override '{item}' must have the form section.key=value")
            if not self.parser.has_section(section):
                self.parser.add_section(section)
            self.parser.set(section, option, value.strip())
            self.lines[(section, option)] = f"override '{item}'"

    def location(self, section: str, option: str = '') -> str:
        where = self.lines.get((section, option)) or self.lines.get((section, ''), self.source)
        return f"{where} [{section}] {option}".rstrip()

    def has_section(self, section: str) -> bool:
        return self.parser.has_section(section)

    def has(self, section: str, option: str) -> bool:
        return self.parser.has_option(section, option)

    def sections(self) -> List[str]:
        return self.parser.sections()

    def error(self, section: str, option: str, message: str) -> ConfigError:
        return ConfigError(f"{self.location(section, option)}: {message}")

    def get_str(self, section: str, option: str, default: Optional[str] = None) -> Optional[str]:
        if not self.has(section, option):
            return default
        self.used.add((section, option))
        return self.parser.get(section, option).strip()

    def get_float(self, section: str, option: str, default: Optional[float] = None, *,
                  minimum: Optional[float] = None, maximum: Optional[float] = None,
                  strict_minimum: bool = False) -> Optional[float]:
        raw = self.get_str(section, option)
        if raw is None:
            return default
        try:
            value = float(raw)
        except ValueError:
            raise self.error(section, option, f"expected a number, got '{raw}'") from None
        if not math.isfinite(value):
            raise self.error(section, option, f"value must be finite, got '{raw}'")
        if minimum is not None and (value < minimum or (strict_minimum and value == minimum)):
            relation = '>' if strict_minimum else '>='
            raise self.error(section, option, f"value must be {relation} {minimum}, got {value}")
        if maximum is not None and value > maximum:
            raise self.error(section, option, f"value must be <= {maximum}, got {value}")
        return value

    def get_int(self, section: str, option: str, default: Optional[int] = None, *,
                minimum: Optional[int] = None) -> Optional[int]:
        raw = self.get_str(section, option)
        if raw is None:
            return default
        try:
            value = int(raw)
        except ValueError:
            raise self.error(section, option, f"expected an integer, got '{raw}'") from None
        if minimum is not None and value < minimum:
            raise self.error(section, option, f"value must be >= {minimum}, got {value}")
        return value

    def get_bool(self, section: str, option: str, default: Optional[bool] = None) -> Optional[bool]:
        raw = self.get_str(section, option)
        if raw is None:
            return default
        try:
            return self.parser.BOOLEAN_STATES[raw.lower()]
        except KeyError:
            raise self.error(section, option, f"expected a boolean, got '{raw}'") from None

    def get_choice(self, section: str, option: str, choices: Iterable[str],
                   default: Optional[str] = None) -> Optional[str]:
        raw = self.get_str(section, option)
        if raw is None:
            return default
        choices = tuple(choices)
        if raw.lower() not in choices:
            raise self.error(section, option, f"expected one of {', '.join(choices)}, got '{raw}'")
        return raw.lower()

    def get_path(self, section: str, option: str) -> Optional[Path]:
        raw = self.get_str(section, option)
        if raw is None or not raw:
            return None
        path = Path(raw)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def options(self, section: str) -> List[str]:
        return self.parser.options(section) if self.has_section(section) else []

    def check_unused(self, known_sections: Iterable[str] = ()):
        """Rejects options and sections that no loader consumed."""
        known = set(known_sections)
        for section in self.parser.sections():
            options = self.parser.options(section)
            if not options and section not in known:
                raise self.error(section, '', "unknown section")
            for option in options:
                if (section, option) not in self.used:
                    raise self.error(section, option, "unknown key")


def dump_sections(sections: Mapping[str, Mapping[str, object]]) -> str:
    """Renders ordered sections as INI text with the documented units header."""
    buffer = io.StringIO()
    buffer.write(CONFIG_HEADER)
    for name, options in sections.items():
        buffer.write(f"\n[{name}]\n")
        for key, value in options.items():
            buffer.write(f"{key} = {format_value(value)}\n")
    return buffer.getvalue()


def config_hash(text: str) -> str:
    """SHA-256 of resolved config text; line endings are normalized first."""
    return hashlib.sha256(text.replace('\r\n', '\n').encode('utf-8')).hexdigest()


def analysis_config_from_file(config: ConfigFile, **updates) -> AnalysisConfig:
    """Reads the optional `[analysis]` section; keyword updates win over file values."""
    section = 'analysis'
    defaults = AnalysisConfig()
    values = dict(
        stride_samples=config.get_int(section, 'stride_samples', defaults.stride_samples, minimum=2),
        trim_seconds=config.get_float(section, 'trim_seconds', defaults.trim_seconds, minimum=0.0),
        area_mode=config.get_choice(section, 'area_mode', ('hull', 'shoelace'), defaults.area_mode),
        pooled_area=config.get_bool(section, 'pooled_area', defaults.pooled_area),
        lag_mode=config.get_choice(section, 'lag_mode', ('signed', 'abs'), defaults.lag_mode),
        heel_strike_prominence=config.get_float(section, 'heel_strike_prominence',
                                                defaults.heel_strike_prominence, minimum=0.0),
        min_spacing_fraction=config.get_float(section, 'min_spacing_fraction', defaults.min_spacing_fraction,
                                              minimum=0.0, maximum=1.0),
        force_threshold=config.get_float(section, 'force_threshold', defaults.force_threshold, minimum=0.0),
        nominal_cycle_s=config.get_float(section, 'nominal_cycle_s', defaults.nominal_cycle_s, minimum=0.0,
                                         strict_minimum=True),
    )
    values.update({key: value for key, value in updates.items() if value is not None})
    return AnalysisConfig(**values)
