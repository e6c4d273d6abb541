"""Adaptive-transformer tracking control with a stochastic simulation harness.

The package couples an encoder-decoder attention network over flattened
state-history windows with a Lyapunov-style projected adaptation law, a
pseudo-inverse tracking controller, and an Euler-Maruyama plant simulator
that re-creates the figure-8 tracking experiment at desk scale.
"""

from .adaptation import AdaptConfig, smooth_projection, step_theta, theta_dot
from .control import ControlConfig, control_law, pinv_right
from .errors import (ConfigError, IntegratorStateError, LyatError,
                     NumericError, RankError)
from .jacobian import backward, fd_jacobian, jacobian, vjp
from .params import (ArchConfig, ThetaLayout, ThetaVector, arch_hash, dim_of,
                     group_dims, init_theta, load_theta, save_theta)
from .plant import (Figure8, PlantModel, em_step, figure8, make_plant,
                    true_uncertainty, wiener_increment)
from .sim import EpisodeTrace, SimConfig, rms_error, run_episode, write_trace_csv
from .transformer import (ForwardTape, PosEncoding, WindowState, build_mask,
                          forward, layer_norm, positional_encoding, softmax_rows)

__version__ = "0.1.0"
