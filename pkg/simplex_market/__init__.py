from .exceptions import *
from .simplex_poly import *
from .model_params import *
from .generator import *
from .sde_sim import *
from .deflator_hedge import *
from .calibration import *
