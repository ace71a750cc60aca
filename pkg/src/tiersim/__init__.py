"""Multi-tier (on-board / edge / cloud) control over lossy, delayed links."""

from .config import LinkConfig, ScenarioConfig, load_config, paper_config
from .controllers import (CloudController, EdgeController, OnboardController,
                          SolverBudget, waypoint_routine)
from .costs import (CostFunction, TaskSpec, build_cost_function, edge_stage_cost,
                    finite_horizon_cost, stage_cost, terminal_cost)
from .dynamics import (DisturbanceModel, PlantModel, apply_disturbance,
                       bicycle_model, bicycle_step, predict)
from .harness import (Aggregate, RunMetrics, Trace, monte_carlo, paper_cells,
                      run_scenario, sweep)
from .network import (Channel, DelayDistribution, DownlinkPacket, UplinkPacket,
                      age_of_information, degenerate, distribution_for_loss,
                      exponential, fit_loss_probability, lognormal, normal,
                      plan_budget, sample_delay, sample_delays)
from .plant import BufferState, Candidate, PlantNode, auxiliary_buffer, select_candidate
from .remote import RemoteNode
from .stability import (AssumptionEstimates, DecreaseReport, LyapunovTrace,
                        SamplingBox, check_decrease, estimate_constants)

__version__ = "0.1.0"
