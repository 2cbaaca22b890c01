"""Learning undercomplete POMDPs with observable operators and optimistic confidence sets."""
from .confidence import ConfidenceSpec, MembershipReport, OperatorStack, check_membership
from .det_learner import DetLearnConfig, ReachabilityTable, learn_deterministic, signature_distance
from .instances import (LockSpec, make_lock, make_lock_deterministic, make_lock_overcomplete,
                        make_lock_undercomplete, make_random_deterministic, make_random_undercomplete)
from .kernels import BACKEND
from .moments import CountTables, exact_moments, joint_tensor, update_counts
from .oom import BeliefVector, OomParams, belief, build_oom, sequence_prob
from .oom_ucb import CandidatePool, RunTrace, optimistic_select, oracle_pool, run_oom_ucb
from .policy import PolicyTree, ValueReport, evaluate_policy, optimal_policy, optimal_value
from .pomdp import (EpisodeSimulator, PomdpModel, RngStream, Trajectory, load_model, dump_model,
                    sample_episode, sample_probe_episode, simulate_batch, validate_model)

__version__ = "0.1.0"
