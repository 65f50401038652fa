"""Exception types shared across the pipeline."""


class SosNavError(Exception):
    """Base class for all package-specific failures."""


class ScenarioError(SosNavError):
    """Scenario file missing, malformed, or violating its schema."""


class DecompositionError(SosNavError):
    """Free-space decomposition could not reach the coverage target."""


class NoEnclosingRegion(SosNavError):
    """No free region fully contains the robot at the queried configuration."""


class Unreachable(SosNavError):
    """Start and goal regions lie in different components of the region graph."""


class AllocationGap(SosNavError):
    """A reference waypoint falls outside every region of the chosen sequence."""

    def __init__(self, tau: int, point, message: str = ""):
        self.tau = tau
        self.point = point
        super().__init__(message or f"waypoint {tau} at {point} lies in no sequence region")


class SolverFailure(SosNavError):
    """Conic solve ended without a certified optimal solution."""
