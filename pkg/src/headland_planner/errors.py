"""Exception types shared across the planner."""


class PlanningError(Exception):
    """Base class for planner failures."""


class InfeasibleGeometryError(PlanningError):
    """Vehicle/row geometry admits no valid covering-circle decomposition."""


class CollisionCheckMisuseError(PlanningError):
    """A collision checker was called with a grid it was not built for."""


class InfeasibleStartError(PlanningError):
    """Start or goal pose is in collision."""


class NoPathError(PlanningError):
    """Search exhausted its expansion budget without reaching the goal."""


class InfeasibleSeedError(PlanningError):
    """A corridor seed pose is in collision on the raw grid."""


class NearSingularError(PlanningError):
    """Flat-output derivatives too close to the v=0 singularity."""


class IllConditionedError(PlanningError):
    """Spline coefficient system is numerically singular."""


class NonFiniteCostError(PlanningError):
    """A cost or gradient term evaluated to NaN/inf."""


class ScenarioError(PlanningError):
    """Scenario file is malformed or violates an invariant."""
