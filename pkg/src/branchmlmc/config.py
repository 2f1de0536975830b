"""Line-oriented ``section.key = value`` run configuration."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from .branching import SNAP, SPLIT
from .digital_sets import BUILTIN_SETS, get_set
from .estimators import EstimatorConfig
from .mlmc import LevelConfig
from .schemes import ANTITHETIC_CC, SCHEMES, scheme_code
from .sde_models import MODEL_REGISTRY, GbmParams, get_model

SEED_ENV = "MLMC_BRANCH_SEED"


class ConfigError(ValueError):
    pass


def _float(s: str) -> float:
    s = s.strip()
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    if s.startswith("2^"):
        return 2.0 ** float(s[2:])
    return float(s)


def _floats(s: str) -> tuple[float, ...]:
    parts = [p for p in s.replace(",", " ").split() if p]
    if not parts:
        raise ValueError("empty list")
    return tuple(_float(p) for p in parts)


def _int(s: str) -> int:
    v = _float(s)
    if v != int(v):
        raise ValueError(f"not an integer: {s!r}")
    return int(v)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _choice(options):
    def parse(s):
        s = s.strip()
        if s not in options:
            raise ValueError(f"{s!r} not in {sorted(options)}")
        return s
    return parse


def parse_levels(s: str) -> tuple[int, ...]:
    """``a..b`` (inclusive) or an explicit list."""
    s = s.strip()
    if ".." in s:
        a, b = s.split("..", 1)
        lo, hi = int(a), int(b)
        if lo > hi or lo < 0:
            raise ValueError(f"bad level range {s!r}")
        return tuple(range(lo, hi + 1))
    return tuple(_int(p) for p in s.replace(",", " ").split())


def _alpha(s: str):
    return None if s.strip().lower() == "fit" else _float(s)


def _seed(s: str) -> int:
    v = int(s.strip(), 0)
    if not 0 <= v < 2**64:
        raise ValueError("seed must fit in 64 bits")
    return v


# key -> (parser, default)
KEYS = {
    "model": (_choice(MODEL_REGISTRY), "gbm"),
    "scheme": (_choice(SCHEMES), "euler"),
    "seed": (_seed, None),
    "threads": (_int, 0),
    "output": (str.strip, "."),
    "payoff.set": (_choice(BUILTIN_SETS), None),
    "payoff.threshold": (_float, 1.0),
    "gbm.d": (_int, 1),
    "gbm.mu": (_floats, (0.05,)),
    "gbm.sigma": (_floats, (0.2,)),
    "gbm.rho": (_float, 0.7),
    "gbm.x0": (_floats, (1.0,)),
    "branch.enabled": (_bool, True),
    "branch.tau0": (_float, 0.5),
    "branch.eta": (_float, 1.0),
    "branch.align": (_choice((SPLIT, SNAP)), None),
    "mlmc.eps": (_float, 0.005),
    "mlmc.h0": (_float, 0.5),
    "mlmc.M": (_int, 2),
    "mlmc.alpha": (_alpha, 1.0),
    "mlmc.max_level": (_int, 12),
    "mlmc.min_level": (_int, 2),
    "mlmc.warmup": (_int, 10_000),
    "study.levels": (parse_levels, tuple(range(2, 10))),
    "study.n": (_int, 100_000),
    "study.h": (_float, 2.0**-10),
    "study.taus": (_floats, tuple(2.0**-k for k in range(3, 10))),
    "study.deltas": (_floats, tuple(2.0**-k for k in range(9, 13))),
    "study.n_outer": (_int, 100_000),
    "study.n_inner": (_int, 64),
    "study.eps_list": (_floats, (0.02, 0.01, 0.005, 0.0025)),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def threads(self) -> int | None:
        return self.values["threads"] or None

    def gbm_params(self) -> GbmParams:
        v = self.values
        d = v["gbm.d"]

        def vec(name):
            x = v[name]
            if len(x) == 1:
                return x * d
            if len(x) != d:
                raise ConfigError(f"{name} has {len(x)} entries but gbm.d = {d}")
            return x

        try:
            return GbmParams(d=d, mu=vec("gbm.mu"), sigma=vec("gbm.sigma"), rho=v["gbm.rho"], x0=vec("gbm.x0"))
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def set_name(self) -> str:
        if self.values["payoff.set"] is not None:
            return self.values["payoff.set"]
        return "gbm-mean-below" if self.values["model"] == "gbm" else "cc-corner"

    def estimator(self, branching: bool | None = None) -> EstimatorConfig:
        v = self.values
        model = get_model(v["model"], self.gbm_params() if v["model"] == "gbm" else None)
        try:
            return EstimatorConfig(
                model=model, scheme=v["scheme"], dset=get_set(self.set_name(), v["payoff.threshold"]),
                branching=v["branch.enabled"] if branching is None else branching,
                tau0=v["branch.tau0"], eta=v["branch.eta"], align=v["branch.align"],
                h0=v["mlmc.h0"], M=v["mlmc.M"], seed=self.seed, threads=self.threads,
            )
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def levels(self) -> LevelConfig:
        v = self.values
        try:
            return LevelConfig(h0=v["mlmc.h0"], M=v["mlmc.M"], max_level=v["mlmc.max_level"],
                               min_level=v["mlmc.min_level"], alpha=v["mlmc.alpha"], warmup=v["mlmc.warmup"])
        except ValueError as e:
            raise ConfigError(str(e)) from None


def _set(values: dict, key: str, raw: str, where: str) -> None:
    if key not in KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        values[key] = KEYS[key][0](raw)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{where}: bad value for {key}: {e}") from None


def validate(cfg: RunConfig) -> RunConfig:
    v = cfg.values
    if v["model"] not in ("gbm", "clark-cameron"):
        raise ConfigError(f"unknown model {v['model']!r}")
    code = scheme_code(v["scheme"])
    if code == ANTITHETIC_CC and v["model"] != "clark-cameron":
        raise ConfigError(f"scheme = antithetic-cc is incompatible with model = {v['model']}")
    if code == ANTITHETIC_CC and v["branch.align"] == SPLIT:
        raise ConfigError("scheme = antithetic-cc is incompatible with branch.align = split")
    if v["scheme"] == "milstein" and v["model"] != "gbm":
        raise ConfigError(f"scheme = milstein is incompatible with model = {v['model']}")
    if v["scheme"] == "exact" and v["model"] != "gbm":
        raise ConfigError(f"scheme = exact is incompatible with model = {v['model']}")
    sname = cfg.set_name()
    dims = BUILTIN_SETS[sname].dims
    d = v["gbm.d"] if v["model"] == "gbm" else 2
    if dims is not None and dims != d:
        raise ConfigError(f"payoff.set = {sname} needs d = {dims}, but model = {v['model']} has d = {d}")
    if not 0 < v["branch.tau0"] < 1:
        raise ConfigError("branch.tau0 must lie in (0, 1)")
    if not v["branch.eta"] > 0:
        raise ConfigError("branch.eta must be positive")
    if not v["mlmc.eps"] > 0:
        raise ConfigError("mlmc.eps must be positive")
    if v["threads"] < 0:
        raise ConfigError("threads must be >= 0")
    if not math.isfinite(v["payoff.threshold"]):
        raise ConfigError("payoff.threshold must be finite")
    cfg.gbm_params()
    cfg.estimator()
    cfg.levels()
    return cfg


def parse_config(text: str = "", overrides: dict | None = None, env=None) -> RunConfig:
    """Defaults, then file lines, then ``overrides``; the seed falls back to ``$MLMC_BRANCH_SEED``."""
    values = {k: default for k, (_, default) in KEYS.items()}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (p.strip() for p in body.split("=", 1))
        _set(values, key, raw, f"line {lineno}")
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = KEYS[key][0](raw) if isinstance(raw, str) else raw
    if values["seed"] is None:
        env = os.environ if env is None else env
        raw = env.get(SEED_ENV)
        try:
            values["seed"] = _seed(raw) if raw else 0
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV}: {e}") from None
    return validate(RunConfig(values))
