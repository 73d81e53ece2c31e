"""
Agent-assisted control and negotiation for RAN slices.

A sliced-RAN simulator with a proportional PRB controller, a meta-optimizer
that retunes its gain (Type I), and a consensus-optimizer guard-rail for
multi-agent SLA negotiation (Type II), plus baselines, audit logging and an
experiment harness.
"""

from .audit import AuditLogger, AuditRecord, read_audit, write_audit
from .baselines import BayesOptConfig, QLearnConfig, QLearner, bayes_enforce, qlearn_enforce
from .channel import (ChannelTrace, LinkModel, Simulation, SliceState, Trajectory, TraceError,
                      enforce_prb, load_trace, mcs_at, step, step_trace, synthetic_dip_trace)
from .consensus import (ConfidenceInterval, ConsensusError, ConsensusProblem, ConsensusResult,
                        JitterSpec, appendix_a_consensus, bootstrap_ci, gd_consensus, utilities)
from .llm import (BackendError, BackendSpec, ExtractionError, HttpBackend, ScriptedBackend,
                  build_backend, extract_json_field)
from .metrics import MetricsReport, mae, prb_savings, report_from_audit, rmse
from .negotiation import (AgentSpec, NegotiationConfig, NegotiationTranscript, SlaProposal,
                          extract_initial_demands, run_negotiation, run_round, score_numeric)
from .pcontrol import ControlLoop, EnforcementResult, Intent, KpiWindow, PControlConfig, enforce_intent
from .prompts import render_guardrail
from .scenario import Scenario, ScenarioError, load_scenario, preset
from .type1 import ActionMemory, KpDecision, KpDecisionRequest, MetaConfig, Type1Agent, heuristic_decide, llm_decide

__version__ = "0.1.0"
