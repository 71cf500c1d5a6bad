"""Run-level configuration shared by the simulator, learner and CLI."""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, replace

from .passivity import TankConfig

# deployment setting used when the passivity layer is evaluated
DEPLOY_E_MAX = 6.0
DEPLOY_FLOW_MIN = -0.5

_NAME_RE = re.compile(r"^(?:agnostic|Eb(?P<b>\d+(?:\.\d+)?)(?:-Ef(?P<f>\d+(?:\.\d+)?))?)$")


@dataclass(frozen=True)
class RunConfig:
    """Constraint set, tank parameters and deployment switches of one run.

    ``budget_constraint`` / ``flow_constraint`` decide which energy
    violations end an episode; the force constraint is always active.
    ``monitor_only`` keeps energy violations observable without terminating.
    """

    name: str = "agnostic"
    budget_constraint: bool = False
    flow_constraint: bool = False
    e_max: float = DEPLOY_E_MAX
    e_min: float = 0.0
    flow_min: float = DEPLOY_FLOW_MIN
    layer: bool = False
    monitor_only: bool = False
    f_max: float = 40.0
    seed: int = 0
    maze: str = "canonical"

    def __post_init__(self):
        if self.flow_constraint and not self.budget_constraint:
            raise ValueError("flow constraint is only defined together with a budget constraint")
        TankConfig(self.e_max, self.e_min, self.flow_min)

    @classmethod
    def from_name(cls, name, **kw):
        """Parse ``agnostic``, ``Eb<b>`` or ``Eb<b>-Ef<f>`` (flow limit = -f/10)."""
        m = _NAME_RE.match(name.strip())
        if m is None:
            raise ValueError(f"bad run config {name!r}; expected agnostic, Eb<b> or Eb<b>-Ef<f>")
        if m.group("b") is None:
            return cls(name="agnostic", **kw)
        params = dict(name=name.strip(), budget_constraint=True, e_max=float(m.group("b")))
        if m.group("f") is not None:
            params.update(flow_constraint=True, flow_min=-float(m.group("f")) / 10.0)
        params.update(kw)
        return cls(**params)

    @classmethod
    def deployment(cls, **kw):
        """Deployment evaluation: tank 6 J / -0.5 W, energy monitored only."""
        params = dict(name="Eb6-Ef5", budget_constraint=True, flow_constraint=True,
                      e_max=DEPLOY_E_MAX, flow_min=DEPLOY_FLOW_MIN, monitor_only=True)
        params.update(kw)
        return cls(**params)

    def tank(self):
        return TankConfig(e_max=self.e_max, e_min=self.e_min, flow_min=self.flow_min,
                          enabled_budget=self.layer, enabled_flow=self.layer)

    def with_(self, **kw):
        return replace(self, **kw)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class EnvConfig:
    """Simulator constants. Defaults are the desk-scale choices documented in the README."""

    dt: float = 1e-3
    ticks_per_step: int = 100
    mass: float = 1.0
    zeta: float = 1.0
    ee_radius: float = 0.01
    contact_stiffness: float = 1e5
    contact_damping: float = 50.0
    obstacle_drag: float = 5.0
    plant_friction: float = 5.0  # viscous, N s/m
    k_init: float = 500.0
    start_jitter: float = 0.005
    dp_max: float = 0.03
    k_min: float = 300.0
    k_max: float = 1000.0
    r_pos: float = -400.0
    r_col: float = -250.0
    r_goal: float = 1000.0
    episode_limit: int | None = None  # None: take the maze's limit
    sensor_noise: float = 0.0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)
