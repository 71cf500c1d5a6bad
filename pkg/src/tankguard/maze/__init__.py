from .env import (ACT_DIM, OBS_DIM, WRENCH_DIM, MazeEnv, SimState, SimulationError, StepOutcome,
                  contact_forces, wrench_observation)
from .spec import MazeSpec, Obstacle, load_maze, save_maze

__all__ = [
    "ACT_DIM", "OBS_DIM", "WRENCH_DIM", "MazeEnv", "MazeSpec", "Obstacle", "SimState", "SimulationError",
    "StepOutcome", "contact_forces", "load_maze", "save_maze", "wrench_observation",
]
