"""Flat dotted-key experiment configuration.

The on-disk format is language-neutral text, one `key = value` per line,
`#` comments allowed. Every key has a default; unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .observables import BumpObservable, ShiftedObservable, project_zero_mean
from .orbit import CocycleConfig
from .rng import SampleStreams
from .timechange import TimeChangeGenerator

BLOCK_SIZE = 8192  # fixed worker block; never depends on the worker count


def _grid(vals):
    return tuple(float(v) for v in vals)


@dataclass
class ExperimentConfig:
    seed: int = 20260808
    n_samples: int = 10_000
    workers: int = 1
    y_max: float = 1000.0
    t_grid: tuple = _grid((2, 4, 8, 16, 32, 64, 128, 256))

    tau_epsilon: float = 0.3
    tau_center: tuple = (1.0, 0.0, 0.0, 1.0)
    tau_radius: float = 0.35
    tau_amplitude: float = 0.05
    tau_cutoff: int = 5

    f_center: tuple = (1.0, 0.0, 0.0, 1.0)
    f_radius: float = 0.3
    f_amplitude: float = 1.0
    f_cutoff: int = 5
    f_project: bool = False

    g_center: tuple = (1.0, 0.25, 0.0, 1.0)
    g_radius: float = 0.3
    g_amplitude: float = 1.0
    g_cutoff: int = 5
    g_project: bool = False

    cocycle_step: float = 1.0 / 16.0
    cocycle_tol: float = 1e-9
    cocycle_reduce_every: int = 16
    cocycle_gl_nodes: int = 12
    cocycle_quadrature: str = "gauss"

    shear_t0: float = 4.0
    shear_r_max: float = 1.0
    shear_gamma: float = 0.25
    exceed_t0_list: tuple = _grid((4, 16, 64))
    exceed_multipliers: tuple = _grid((1, 2, 4, 8))
    l2_step: float = 1.0 / 32.0
    noise_mult: float = 2.0

    def validate(self):
        if self.n_samples <= 0 or self.workers <= 0 or self.seed < 0:
            raise ConfigError("n_samples, workers positive; seed nonnegative")
        if self.y_max < 2.0:
            raise ConfigError("y_max must be >= 2")
        if any(t <= 0 for t in self.t_grid) or list(self.t_grid) != sorted(
            set(self.t_grid)
        ):
            raise ConfigError("t_grid must be positive and strictly increasing")
        return self

    # -- object construction ------------------------------------------------

    def cocycle(self) -> CocycleConfig:
        return CocycleConfig(
            step=self.cocycle_step,
            tol=self.cocycle_tol,
            reduce_every=self.cocycle_reduce_every,
            gl_nodes=self.cocycle_gl_nodes,
            quadrature=self.cocycle_quadrature,
        )

    @staticmethod
    def _bump(center, radius, amplitude, cutoff) -> BumpObservable:
        c = np.array(center, dtype=np.float64).reshape(2, 2)
        return BumpObservable(c, radius, amplitude, int(cutoff))

    def tau(self) -> TimeChangeGenerator:
        psi = self._bump(
            self.tau_center, self.tau_radius, self.tau_amplitude, self.tau_cutoff
        )
        return TimeChangeGenerator(psi, self.tau_epsilon)

    def observable_f(self, weight=None):
        f = self._bump(self.f_center, self.f_radius, self.f_amplitude, self.f_cutoff)
        if self.f_project:
            return project_zero_mean(
                f, weight, 200_000, SampleStreams(self.seed ^ 0x5EED), self.y_max
            )
        return f

    def observable_g(self, weight=None):
        g = self._bump(self.g_center, self.g_radius, self.g_amplitude, self.g_cutoff)
        if self.g_project:
            return project_zero_mean(
                g, weight, 200_000, SampleStreams(self.seed ^ 0x6EED), self.y_max
            )
        return g


_KEYMAP = {
    "seed": ("seed", int),
    "n_samples": ("n_samples", int),
    "workers": ("workers", int),
    "y_max": ("y_max", float),
    "t_grid": ("t_grid", "grid"),
    "tau.epsilon": ("tau_epsilon", float),
    "tau.psi.radius": ("tau_radius", float),
    "tau.psi.amplitude": ("tau_amplitude", float),
    "tau.psi.cutoff": ("tau_cutoff", int),
    "f.radius": ("f_radius", float),
    "f.amplitude": ("f_amplitude", float),
    "f.cutoff": ("f_cutoff", int),
    "f.project": ("f_project", "bool"),
    "g.radius": ("g_radius", float),
    "g.amplitude": ("g_amplitude", float),
    "g.cutoff": ("g_cutoff", int),
    "g.project": ("g_project", "bool"),
    "cocycle.step": ("cocycle_step", float),
    "cocycle.tol": ("cocycle_tol", float),
    "cocycle.reduce_every": ("cocycle_reduce_every", int),
    "cocycle.gl_nodes": ("cocycle_gl_nodes", int),
    "cocycle.quadrature": ("cocycle_quadrature", str),
    "shear.t0": ("shear_t0", float),
    "shear.r_max": ("shear_r_max", float),
    "shear.gamma": ("shear_gamma", float),
    "exceed.t0_list": ("exceed_t0_list", "grid"),
    "exceed.multipliers": ("exceed_multipliers", "grid"),
    "l2.step": ("l2_step", float),
    "noise_mult": ("noise_mult", float),
}
for _obj, _attr in (("tau.psi", "tau"), ("f", "f"), ("g", "g")):
    for _i, _e in enumerate(("a11", "a12", "a21", "a22")):
        _KEYMAP["%s.center.%s" % (_obj, _e)] = ("%s_center" % _attr, ("center", _i))

HELP_KEYS = "\n".join(
    "  %s" % k for k in sorted(_KEYMAP)
)


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse `key = value` lines over the defaults (or a given base)."""
    cfg = base or ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected key = value" % lineno)
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _KEYMAP:
            raise ConfigError("line %d: unknown key %r" % (lineno, key))
        attr, typ = _KEYMAP[key]
        try:
            if typ == "grid":
                setattr(cfg, attr, _grid(v for v in val.replace(",", " ").split()))
            elif typ == "bool":
                setattr(cfg, attr, val.lower() in ("1", "true", "yes", "on"))
            elif isinstance(typ, tuple) and typ[0] == "center":
                cur = list(getattr(cfg, attr))
                cur[typ[1]] = float(val)
                setattr(cfg, attr, tuple(cur))
            else:
                setattr(cfg, attr, typ(val))
        except ValueError as exc:
            raise ConfigError("line %d: bad value for %s: %s" % (lineno, key, exc))
    return cfg.validate()


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read(), cfg)
    for k, v in (overrides or {}).items():
        setattr(cfg, k, v)
    return cfg.validate()
