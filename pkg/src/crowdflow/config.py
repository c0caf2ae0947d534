"""Flat key-value experiment configuration.

The format is plain UTF-8 text, one ``dotted.key = value`` per line, with
``#`` comments; lists are comma separated and box shapes use
``a,b,height`` triples joined by semicolons.  Easy to diff, trivial to
parse anywhere.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .model import GridSpec
from .potentials import potential_catalog


class ConfigError(ValueError):
    """Malformed or missing configuration (CLI exit code 2)."""


EXPERIMENT_KINDS = ("single-run", "converge-m", "converge-h", "compare",
                    "longtime", "crossval")


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        raw = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, val = body.split("=", 1)
            raw[key.strip()] = val.strip()
        return cls(raw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.from_text(f.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    # -- typed getters -------------------------------------------------------

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def get_float(self, key, default=None):
        val = self.raw.get(key)
        if val is None:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return float(default)
        try:
            return float(val)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: not a number: {val!r}") from exc

    def get_int(self, key, default=None):
        return int(round(self.get_float(key, default)))

    def get_bool(self, key, default=False):
        val = self.raw.get(key)
        if val is None:
            return bool(default)
        if val.lower() in ("1", "true", "yes", "on"):
            return True
        if val.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"key {key!r}: not a boolean: {val!r}")

    def get_floats(self, key, default=None):
        val = self.raw.get(key)
        if val is None:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return list(default)
        try:
            return [float(tok) for tok in val.split(",") if tok.strip()]
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: bad list: {val!r}") from exc

    def get_m_list(self, key="m.list", default=None):
        val = self.raw.get(key)
        if val is None:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            vals = list(default)
        else:
            vals = []
            for tok in val.split(","):
                tok = tok.strip().lower()
                if not tok:
                    continue
                vals.append(math.inf if tok in ("inf", "infinity") else float(tok))
        finite = [v for v in vals if not math.isinf(v)]
        if finite != sorted(finite):
            raise ConfigError("m.list must be sorted ascending")
        return vals

    def get_m(self, key="m", default=None):
        val = self.raw.get(key)
        if val is None:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        tok = val.strip().lower()
        return math.inf if tok in ("inf", "infinity") else float(tok)

    # -- composite builders --------------------------------------------------

    def boxes(self, key="init.boxes"):
        val = self.raw.get(key)
        if val is None:
            raise ConfigError(f"missing required key {key!r}")
        out = []
        for part in val.split(";"):
            toks = [t for t in part.split(",") if t.strip()]
            if len(toks) != 3:
                raise ConfigError(f"key {key!r}: boxes are 'a,b,height' triples")
            a, b, h = (float(t) for t in toks)
            out.append((a, b, h))
        return out

    def shape_spec(self, key="init.boxes"):
        spec = {"boxes": self.boxes(key)}
        if "init.normalize" in self.raw:
            spec["normalize"] = self.get_float("init.normalize")
        return spec

    def grid_spec(self) -> GridSpec:
        return GridSpec(self.get_float("grid.lo", -4.0),
                        self.get_float("grid.hi", 4.0),
                        self.get_int("grid.n", 800),
                        dim=self.get_int("grid.dim", 1))

    def potential(self):
        kind = self.get("potential.kind", "quadratic")
        params = {}
        for key, val in self.raw.items():
            if key.startswith("potential.") and key not in (
                    "potential.kind", "potential.domain"):
                name = key.split(".", 1)[1]
                if name == "coef":
                    params["coef"] = [float(t) for t in val.split(",")]
                else:
                    params[name] = float(val)
        dom = self.get_floats("potential.domain", (-8.0, 8.0))
        if len(dom) != 2 or not dom[1] > dom[0]:
            raise ConfigError("potential.domain must be 'lo,hi' with lo < hi")
        try:
            return potential_catalog(kind, params, domain=tuple(dom),
                                     dim=self.get_int("grid.dim", 1))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def hash(self) -> str:
        canon = "\n".join(f"{k} = {self.raw[k]}" for k in sorted(self.raw))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]
