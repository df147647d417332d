"""Decision diagrams for constrained path problems, bilevel blocking and robust routing."""
from .bilevel import (BilevelInstance, CpspInstance, brute_force_bilevel, build_follower_dd,
                      build_single_level_milp, compute_big_m, generate_cpsp, solve_ddr)
from .csp import (CspInstance, SideConstraints, brute_force_csp, build_flow_milp,
                  expand_state_graph, solve_flow_milp, solve_labeling, solve_pulse)
from .dd import (DecisionDiagram, DpSpec, LinearBinarySpec, compile_dd, enumerate_paths,
                 export_dot, extreme_path, reduce_dd)
from .errors import (CapExceeded, DDCSPError, InfeasibleInstance, LayerExplosion,
                     NoFeasiblePath, ParseError, PathCapExceeded, SolverError,
                     StateCapExceeded, TimeLimitReached)
from .pulse import PulseConfig
from .robust import (RobustConstraintView, RtsptwInstance, Scenario, brute_force_robust,
                     build_ip_baseline, build_sep_milp, build_tsp_dd, check_route,
                     generate_rtsptw, separate, solve_ip_augmenting, solve_state_augmenting)

__version__ = "0.1.0"
