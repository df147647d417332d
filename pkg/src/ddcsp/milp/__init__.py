"""Small exact LP/MILP toolkit: model container, bounded simplex, branch and bound, LP files."""
from .bnb import solve_milp
from .lpformat import parse_lp, read_lp_file, write_lp, write_lp_file
from .model import LpModel, LpSolution, Status
from .simplex import dual_objective, solve_lp
