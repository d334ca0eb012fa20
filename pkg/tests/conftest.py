import functools

import numpy as np

from stairprep.circuit import random_circuit
from stairprep.hamiltonians import SpinChainModel, build_mpo, dmrg_ground_state
from stairprep.mps import product_state, random_mps
from stairprep.optimizer import loss_gradient, negative_log_fidelity
from stairprep.tensor_core import finite_difference_gradient

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def heisenberg_target(n_sites: int, chi: int):
    """DMRG ground state, computed once per session (the N=48 ones are slow)."""
    return dmrg_ground_state(build_mpo(SpinChainModel("heisenberg", n_sites)), chi)


def fd_relative_error(seed, n_sites=6, n_layers=2, chi_evolve=64, h=1e-5):
    """Max-norm relative error of the analytic gradient against central
    differences, over all layers of a random instance. The FD loss replays the
    kept ranks of the unperturbed forward pass."""
    c = random_circuit(n_sites, n_layers, seed)
    target = random_mps(n_sites, 4, seed + 10_000)
    psi0 = product_state([0] * n_sites)
    record: list = []
    negative_log_fidelity(target, c, psi0, chi_evolve, record=record)
    worst = 0.0
    for layer in range(n_layers):
        analytic = loss_gradient(target, c, psi0, layer, chi_evolve)

        def loss(x, layer=layer):
            trial = c.replace_layer(layer, x)
            return negative_log_fidelity(target, trial, psi0, chi_evolve, replay=record)[0]

        d_re, d_im = finite_difference_gradient(loss, c.latents[layer], h)
        fd = d_re + 1j * d_im
        worst = max(worst, float(np.max(np.abs(analytic - fd)) / np.max(np.abs(fd))))
    return worst


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
