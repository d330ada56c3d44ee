"""Flat ``key = value`` divider configuration files.

Keys::

    name                 free text
    iterations           k
    n_frac_bits          k+1 integers, fractional width of N_0..N_k
    d_frac_bits          k integers, fractional width of D_0..D_{k-1}
    f_frac_bits          k integers, width of F_i after the complement/truncation
    f_omit_bits          k integers, leading F bits dropped by the rectangular
                         multiply (0 = plain multiply)
    complement           ones | twos
    n0_reduced           true | false (N_0 keeps one bit fewer)
    bias_ulps            integer added to final-iteration readouts, in final ulps
    divisor_frac_bits    widest divisor mantissa the table is scanned for
    table.n1 .. table.n3, table.large_out_bits, table.small_out_bits,
    table.sub_bits, table.out_frac_bits (optional), table.method (midpoint | minimax)
    readout.<name>       "<iteration> <mantissa bits>", one line per readout

``#`` starts a comment. Unknown keys are rejected.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .engine import ConfigError, DividerConfig, Readout
from .recip_table import BipartiteConfig

_LIST_KEYS = ("n_frac_bits", "d_frac_bits", "f_frac_bits", "f_omit_bits")
_INT_KEYS = ("iterations", "bias_ulps", "divisor_frac_bits")
_TABLE_INT_KEYS = ("n1", "n2", "n3", "large_out_bits", "small_out_bits", "sub_bits", "out_frac_bits")
PRESETS = ("threestage", "twostage", "toy")


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse(text: str, source: str = "<config>") -> DividerConfig:
    raw: dict[str, str] = {}
    readouts = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("readout."):
            parts = value.split()
            if len(parts) != 2:
                raise ConfigError(f"{source}:{lineno}: readout needs '<iteration> <mantissa bits>'")
            readouts.append(Readout(key[len("readout."):], int(parts[0]), int(parts[1])))
            continue
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key}")
        raw[key] = value

    kw: dict = {"readouts": tuple(readouts)}
    table_kw: dict = {}
    try:
        for key, value in raw.items():
            if key in _LIST_KEYS:
                kw[key] = tuple(int(v) for v in value.split())
            elif key in _INT_KEYS:
                kw[key] = int(value)
            elif key == "n0_reduced":
                kw[key] = _bool(value)
            elif key in ("complement", "name"):
                kw[key] = value
            elif key.startswith("table."):
                sub = key[len("table."):]
                if sub in _TABLE_INT_KEYS:
                    table_kw[sub] = int(value)
                elif sub == "method":
                    table_kw[sub] = value
                else:
                    raise ConfigError(f"{source}: unknown key {key}")
            else:
                raise ConfigError(f"{source}: unknown key {key}")
        kw["table"] = BipartiteConfig(**table_kw)
        return DividerConfig(**kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from exc


def load(path) -> DividerConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse(text, str(p))


def preset(name: str) -> DividerConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {PRESETS}")
    text = resources.files("gsdiv.presets").joinpath(f"{name}.cfg").read_text()
    return parse(text, f"{name}.cfg")


def resolve(spec: str) -> DividerConfig:
    """A preset name or a path to a config file."""
    if spec in PRESETS:
        return preset(spec)
    return load(spec)


def dumps(config: DividerConfig) -> str:
    t = config.table
    lines = [
        f"name = {config.name}" if config.name else None,
        f"iterations = {config.iterations}",
        *(f"{key} = {' '.join(map(str, getattr(config, key)))}" for key in _LIST_KEYS),
        f"complement = {config.complement}",
        f"n0_reduced = {'true' if config.n0_reduced else 'false'}",
        f"bias_ulps = {config.bias_ulps}",
        f"divisor_frac_bits = {config.divisor_frac_bits}",
        *(f"table.{key} = {getattr(t, key)}" for key in _TABLE_INT_KEYS
          if getattr(t, key) is not None),
        f"table.method = {t.method}",
        *(f"readout.{r.name} = {r.iteration} {r.mantissa_bits}" for r in config.readouts),
    ]
    return "\n".join(line for line in lines if line is not None) + "\n"
