"""``key = value`` experiment configuration files."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

from .integrator import ForcingSpec, SimParams
from .lyapunov import WeightedMetricSpec


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message)


REQUIRED = ("nu", "dt", "cutoff", "grid_factor", "horizon", "seed", "forced_modes")
OPTIONAL = {
    "fbar_modes": "",
    "nonlinear": "true",
    "eta": "",  # default 0.05 nu / (4 |Q|)
    "r": "1.0",
    "delta": "1.0",
    "beta": "0.1",
    "kappa": "1.0",
    "r0": "0.5",
    "ensemble_size": "256",
    "record_stride": "200",
    "burn_in": "0.2",
    "x0": "",
    "y0": "",
    "name": "default",
}


def parse_modes(text: str, complex_amp: bool) -> tuple:
    """``"k1,k2:q;..."`` or ``"k1,k2:re,im;..."``."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        try:
            kpart, apart = item.split(":")
            k1, k2 = (int(v) for v in kpart.split(","))
            vals = [float(v) for v in apart.split(",")]
        except ValueError as exc:
            raise ConfigError(f"malformed mode entry {item!r}") from exc
        if complex_amp:
            if len(vals) != 2:
                raise ConfigError(f"mean force entry {item!r} needs re,im")
            out.append(((k1, k2), complex(vals[0], vals[1])))
        else:
            if len(vals) != 1:
                raise ConfigError(f"forced mode entry {item!r} needs one amplitude")
            out.append(((k1, k2), vals[0]))
    return tuple(out)


def format_modes(pairs, complex_amp: bool) -> str:
    parts = []
    for (k1, k2), v in pairs:
        amp = f"{v.real!r},{v.imag!r}" if complex_amp else f"{float(v)!r}"
        parts.append(f"{k1},{k2}:{amp}")
    return ";".join(parts)


def _bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"key {key!r}: expected a boolean, got {text!r}", key)


def default_eta(nu: float, forcing: ForcingSpec) -> float:
    return 0.05 * nu / (4 * forcing.q_norm)


@dataclass(frozen=True)
class ExperimentConfig:
    params: SimParams
    forcing: ForcingSpec
    metric: WeightedMetricSpec
    ensemble_size: int = 256
    record_stride: int = 200
    burn_in: float = 0.2
    output_dir: str = "out"
    name: str = "default"
    x0: tuple = ()
    y0: tuple = ()
    raw: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.ensemble_size < 2:
            raise ConfigError("ensemble_size must be at least 2", "ensemble_size")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be positive", "record_stride")
        if not 0 <= self.burn_in < 1:
            raise ConfigError("burn_in must lie in [0, 1)", "burn_in")

    def replace(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, params=self.params.replace(seed=seed))

    def canonical_text(self) -> str:
        p, f, m = self.params, self.forcing, self.metric
        items = {
            "nu": repr(p.nu), "dt": repr(p.dt), "cutoff": str(p.cutoff),
            "grid_factor": repr(p.grid_factor), "horizon": repr(p.horizon), "seed": str(p.seed),
            "nonlinear": str(p.nonlinear).lower(),
            "forced_modes": format_modes(zip(f.forced, f.amplitudes), False),
            "fbar_modes": format_modes(f.mean_force, True),
            "eta": repr(m.eta), "r": repr(m.r), "delta": repr(m.delta), "beta": repr(m.beta),
            "kappa": repr(m.kappa), "r0": repr(m.r0),
            "ensemble_size": str(self.ensemble_size), "record_stride": str(self.record_stride),
            "burn_in": repr(self.burn_in), "name": self.name,
            "x0": format_modes(self.x0, True), "y0": format_modes(self.y0, True),
        }
        return "".join(f"{k} = {items[k]}\n" for k in sorted(items))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def parse_config(text: str, output_dir: str = "out") -> ExperimentConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in REQUIRED and key not in OPTIONAL:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", key)
        raw[key] = value
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}", key)
    vals = {**OPTIONAL, **raw}

    def num(key, cast=float):
        try:
            return cast(vals[key])
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: cannot parse {vals[key]!r}", key) from exc

    try:
        forced = parse_modes(vals["forced_modes"], False)
        fbar = parse_modes(vals["fbar_modes"], True)
        forcing = ForcingSpec(tuple(k for k, _ in forced), tuple(q for _, q in forced), fbar)
        params = SimParams(
            nu=num("nu"), dt=num("dt"), cutoff=num("cutoff", int), horizon=num("horizon"),
            grid_factor=num("grid_factor"), seed=num("seed", int),
            nonlinear=_bool(vals["nonlinear"], "nonlinear"),
        )
        eta = num("eta") if vals["eta"] else default_eta(params.nu, forcing)
        metric = WeightedMetricSpec(eta=eta, r=num("r"), delta=num("delta"), beta=num("beta"),
                                    kappa=num("kappa"), r0=num("r0"))
        return ExperimentConfig(
            params, forcing, metric,
            ensemble_size=num("ensemble_size", int), record_stride=num("record_stride", int),
            burn_in=num("burn_in"), output_dir=output_dir, name=vals["name"],
            x0=parse_modes(vals["x0"], True), y0=parse_modes(vals["y0"], True), raw=raw,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, output_dir: str = "out") -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, output_dir)


DEFAULT_CONFIG_TEXT = """\
# desk-scale defaults
nu = 0.5
dt = 0.005
cutoff = 16
grid_factor = 1.5
horizon = 50
seed = 0
forced_modes = 1,0:1.0;1,1:1.0
x0 = 1,0:0.5,0.0
y0 = 1,0:-0.5,0.0;0,1:0.5,0.0
"""


def default_config(output_dir: str = "out") -> ExperimentConfig:
    return parse_config(DEFAULT_CONFIG_TEXT, output_dir)
