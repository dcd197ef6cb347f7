"""Momentum SGD state."""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np


@dataclass
class OptimizerState:
    """Velocity buffer per named parameter and the number of steps taken."""

    velocity: Dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0
