"""INI-style experiment config files (``key = value`` under ``[section]`` headers).

Example::

    [experiment]
    strategy = openal
    rounds = 7
    seeds = 0,1,2,3

    [pool]
    source = synth
    target_classes = 0,1,2

    [synth]
    classes = 9
    count = 1000
    dim = 32
"""

import configparser
from dataclasses import replace

from .engine import ExperimentConfig
from .probe import ProbeConfig


class ConfigError(ValueError):
    pass


def _ints(text):
    return tuple(int(x) for x in str(text).replace(";", ",").split(",") if x.strip())


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# section -> {file key: (ExperimentConfig field, parser)}
_LAYOUT = {
    "experiment": {
        "strategy": ("strategy", str),
        "rounds": ("rounds", int),
        "seed_fraction": ("seed_fraction", float),
        "budget_fraction": ("budget_fraction", float),
        "candidate_multiplier": ("candidate_multiplier", int),
        "clusters": ("W", int),
        "test_fraction": ("test_fraction", float),
        "train_after_seed": ("train_after_seed", _bool),
        "seeds": ("seeds", _ints),
    },
    "ablation": {
        "disable_sw": ("disable_sw", _bool),
        "disable_st": ("disable_st", _bool),
        "disable_miss": ("disable_miss", _bool),
        "only_miss": ("only_miss", _bool),
    },
    "pool": {
        "source": ("source", str),
        "path": ("path", str),
        "target_classes": ("target_classes", _ints),
    },
    "synth": {
        "classes": ("synth_classes", int),
        "count": ("synth_count", int),
        "dim": ("synth_dim", int),
        "scale": ("synth_scale", float),
        "separation": ("synth_separation", float),
        "seed": ("synth_seed", int),
    },
}
_PROBE_PARSERS = {"learning_rate": float, "epochs": int, "l2_penalty": float, "seed": int}


def parse_config(text, source="<string>"):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values, probe = {}, {}
    for section in cp.sections():
        if section == "probe":
            for key, raw in cp.items(section):
                if key not in _PROBE_PARSERS:
                    raise ConfigError(f"{source}: unknown key [probe] {key}")
                try:
                    probe[key] = _PROBE_PARSERS[key](raw)
                except ValueError as exc:
                    raise ConfigError(f"{source}: [probe] {key}: {exc}") from None
            continue
        if section not in _LAYOUT:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _LAYOUT[section]:
                raise ConfigError(f"{source}: unknown key [{section}] {key}")
            name, parse = _LAYOUT[section][key]
            try:
                values[name] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: [{section}] {key}: {exc}") from None
    try:
        cfg = ExperimentConfig(**values, probe=ProbeConfig(**probe))
        return cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def dump_config(cfg):
    """Render ``cfg`` back to the file format; parse_config(dump_config(c)) == c."""

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            return ",".join(str(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = []
    for section, keys in _LAYOUT.items():
        lines.append(f"[{section}]")
        for key, (name, _) in keys.items():
            lines.append(f"{key} = {fmt(getattr(cfg, name))}")
        lines.append("")
    lines.append("[probe]")
    for key in _PROBE_PARSERS:
        lines.append(f"{key} = {fmt(getattr(cfg.probe, key))}")
    return "\n".join(lines) + "\n"


def apply_overrides(cfg, seed=None, strategy=None):
    kw = {}
    if seed is not None:
        kw["seeds"] = (int(seed),)
    if strategy is not None:
        kw["strategy"] = strategy
    return replace(cfg, **kw).validate() if kw else cfg


def load_synth_spec(path):
    """Read a ``[synth]`` section into a SynthSpec.

    Keys: classes, count (or per-class ``counts``), dim, scale, separation,
    seed, target_classes.
    """
    from .pool import PoolError, make_synth_spec

    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            cp.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read synth spec {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not cp.has_section("synth"):
        raise ConfigError(f"{path}: missing [synth] section")
    sec = cp["synth"]
    allowed = {"classes", "count", "counts", "dim", "scale", "separation", "seed", "target_classes"}
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"{path}: unknown key [synth] {sorted(extra)[0]}")
    try:
        counts = _ints(sec["counts"]) if "counts" in sec else None
        classes = len(counts) if counts else sec.getint("classes", 9)
        return make_synth_spec(
            classes,
            list(counts) if counts else sec.getint("count", 1000),
            sec.getint("dim", 32),
            _ints(sec.get("target_classes", "0,1,2")),
            sec.getfloat("scale", 1.0),
            sec.getfloat("separation", 4.0),
            sec.getint("seed", 0),
        )
    except (ValueError, PoolError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
