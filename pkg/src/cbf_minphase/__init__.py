"""Control barrier function safety filters and the internal dynamics they leave unobserved."""

__version__ = "0.1.0"

from .cbf_core import GammaSpec, OutputChain, build_gamma_spec, eval_mu, eval_phi, eval_xi  # noqa: E402
from .filters import clf_cbf_qp, min_norm_filter, solve_qp_small, track_kappa_ps  # noqa: E402
from .internal_analysis import extract_internal_linear, local_min_phase_jacobian, multi_input_obstruction  # noqa: E402
from .runner import run_scenario, run_sweep  # noqa: E402
from .scenarios import build_scenario, list_scenarios  # noqa: E402
from .simulation import classify, simulate  # noqa: E402

__all__ = [
    "__version__",
    "GammaSpec",
    "OutputChain",
    "build_gamma_spec",
    "build_scenario",
    "classify",
    "clf_cbf_qp",
    "eval_mu",
    "eval_phi",
    "eval_xi",
    "extract_internal_linear",
    "list_scenarios",
    "local_min_phase_jacobian",
    "min_norm_filter",
    "multi_input_obstruction",
    "run_scenario",
    "run_sweep",
    "simulate",
    "solve_qp_small",
    "track_kappa_ps",
]
