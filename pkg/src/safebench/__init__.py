"""Energy-function safe controllers and an interaction benchmark around them."""
from .controllers import Algorithm, ControllerConfig, direct_control, reference_controller, unified_control
from .dynamics import Arm4Dof, Ball2D, IntegratorConfig, Scara, Unicycle, make_model, step
from .safety_index import ObstacleState, SafetyIndexParams, critical_pair, lie_derivatives

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "ControllerConfig", "direct_control", "reference_controller", "unified_control",
    "Arm4Dof", "Ball2D", "IntegratorConfig", "Scara", "Unicycle", "make_model", "step",
    "ObstacleState", "SafetyIndexParams", "critical_pair", "lie_derivatives",
]
