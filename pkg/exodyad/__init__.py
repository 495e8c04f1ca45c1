__version__ = '0.1.0'

from exodyad.analysis.metrics import dtw_align, dyad_deviation, paired_t_test, workspace_area
from exodyad.analysis.pipeline import analyze_dataset, analyze_simlog
from exodyad.analysis.report import MetricRecord, MetricsReport
from exodyad.dynamics.coupling import DyadCouplingConfig, render_interaction_torques
from exodyad.dynamics.controller import InteractionTorqueController
from exodyad.dynamics.loader import load_sim_config
from exodyad.dynamics.plant import SimConfig, SimLog, Simulation, run_simulation
