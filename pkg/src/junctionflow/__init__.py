"""Traffic flow through a 2:1 junction controlled by a periodic light.

Three descriptions of the same traffic are provided and compared:

* ``micro``: follow-the-leader vehicles with the light;
* ``netfv`` in switching mode: the conservation law with the light;
* ``netfv`` in homogenized mode: the conservation law with the
  time-averaged junction condition described in ``germ``.

``harness`` runs the comparisons and diagnostics, ``cli`` drives it all
from JSON scenarios.
"""
from .errors import ConsistencyError, DomainError, InvalidParameterError, JunctionFlowError, ScenarioError
from .flux import FluxModel, make_quadratic, make_tabulated
from .germ import GermParams, GermPoint
from .micro import LightSchedule, MicroState
from .netfv import Homogenized, NetworkGrid, Switching

__version__ = "1.0.0"

__all__ = [
    "ConsistencyError", "DomainError", "InvalidParameterError", "JunctionFlowError", "ScenarioError",
    "FluxModel", "make_quadratic", "make_tabulated", "GermParams", "GermPoint",
    "LightSchedule", "MicroState", "Homogenized", "NetworkGrid", "Switching",
]
