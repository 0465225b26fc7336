"""Phaseless imaging by classic Wirtinger Flow and by unrolled WF with
deep decoding priors, with a numerical lab for the exact-recovery theory."""

from .data import (ContainerError, Sample, gen_squares, load_container,
                   load_dataset, load_idx, load_map, store_container,
                   store_dataset, store_map, synthesize)
from .forward import (ForwardMap, SpectralInit, intensity, lifted_adjoint,
                      lifted_apply, make_fourier, make_gaussian,
                      spectral_init, spectral_matrix)
from .linalg import (EigPair, PowerResult, Rank2Pairs, SpectralNormResult,
                     dist, hermitian_norm, power_iteration, rank2_eig,
                     spectral_norm)
from .nets import (Layer, Net, lipschitz_empirical, lipschitz_upper,
                   net_forward, net_jvp, net_random, net_vjp)
from .theory import (InitMetrics, TheoryParams, TheoryReport, b1_b2,
                     check_theorem1, contraction_audit, delta_apply,
                     estimate_delta, estimate_eps, estimate_omega,
                     frame_bounds, h_tilde, init_metrics)
from .training import (AdamState, TrainConfig, adam_step, train,
                       train_backward, train_loss)
from .unrolled import (EncodedTrace, UnrolledModel, grad_K, loss_K,
                       phase_align, reconstruct, rnn_forward, stack_features)
from .wf import WfConfig, WfTrace, grad_J, loss_J, run_wf

__all__ = [n for n in dir() if not n.startswith("_")]
