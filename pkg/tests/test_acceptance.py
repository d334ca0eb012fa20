"""Acceptance criteria 1-10, one test each.

Every test records a ``CRITERION n: PASS|FAIL ...`` line; the lines are
printed as they happen (visible with ``-s``) and collected into an
"acceptance criteria" section of the terminal summary. The N=48 runs take
several minutes each; deselect them with ``-m "not slow"``.

Run stand-alone with ``python tests/test_acceptance.py``.
"""

import math
import sys

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, fd_relative_error, heisenberg_target
from stairprep import experiment as exp
from stairprep import serialization as ser
from stairprep.circuit import apply_circuit_mps, apply_circuit_statevector, compression_ratio, identity_circuit, random_circuit
from stairprep.hamiltonians import SpinChainModel, build_mpo, dmrg_ground_state, exact_ground_state
from stairprep.mps import bond_entropy, overlap, random_mps, to_statevector
from stairprep.optimizer import TrainConfig, grow_and_train
from stairprep.tensor_core import complex_normal, make_rng, project_to_unitary, random_unitary

LN4 = math.log(4)


def verdict(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_gradient_vs_finite_differences():
    errors = [fd_relative_error(seed, n_sites=6, n_layers=2, chi_evolve=64, h=1e-5) for seed in range(20)]
    worst = max(errors)
    verdict(1, worst < 1e-5, f"worst relative max-norm error over 20 seeds = {worst:.3e} (< 1e-5)")


def test_criterion_02_projection():
    rng = make_rng(2024)
    worst_unit = worst_idem = worst_scale = 0.0
    similarity_ok = True
    for _ in range(1000):
        g = complex_normal(rng, (4, 4))
        w = project_to_unitary(g)
        worst_unit = max(worst_unit, np.max(np.abs(w.conj().T @ w - np.eye(4))))
        worst_idem = max(worst_idem, np.max(np.abs(project_to_unitary(w) - w)))
        c = 10.0 ** rng.uniform(-3, 3)
        worst_scale = max(worst_scale, np.max(np.abs(project_to_unitary(c * g) - w)))
        best = np.real(np.trace(g.conj().T @ w))
        for _ in range(100):
            q = random_unitary(4, rng)
            similarity_ok &= bool(best >= np.real(np.trace(g.conj().T @ q)))
    ok = worst_unit < 1e-12 and worst_idem < 1e-12 and worst_scale < 1e-12 and similarity_ok
    verdict(
        2,
        ok,
        f"|W'W-I|={worst_unit:.1e} idempotence={worst_idem:.1e} scale={worst_scale:.1e} "
        f"maximizer vs 100x1000 unitaries: {similarity_ok}",
    )


def test_criterion_03_mps_vs_dense_overlap():
    worst = 0.0
    for n in (4, 6, 8, 10):
        for n_layers in (1, 2, 3):
            seed = 100 * n + n_layers
            c = random_circuit(n, n_layers, seed)
            psi0, bra = random_mps(n, 4, seed), random_mps(n, 4, seed + 1)
            evolved, _ = apply_circuit_mps(c, psi0, 2**n, 0.0)
            dense = np.vdot(to_statevector(bra), apply_circuit_statevector(c, to_statevector(psi0)))
            worst = max(worst, abs(overlap(bra, evolved) - dense))
    verdict(3, worst < 1e-10, f"max |MPS overlap - dense overlap| = {worst:.2e} (< 1e-10)")


def test_criterion_04_ground_state_solvers():
    gaps = {}
    for kind in ("heisenberg", "xy"):
        model = SpinChainModel(kind, 12)
        e_ed, _ = exact_ground_state(model)
        gaps[kind] = abs(dmrg_ground_state(build_mpo(model), 64).energy - e_ed)
    e2 = dmrg_ground_state(build_mpo(SpinChainModel("heisenberg", 2)), 2).energy
    ok = max(gaps.values()) < 1e-6 and abs(e2 + 0.75) < 1e-10
    verdict(4, ok, f"|E_DMRG-E_ED| N=12: heisenberg {gaps['heisenberg']:.1e}, xy {gaps['xy']:.1e}; N=2 E={e2:.12f}")


@pytest.fixture(scope="module")
def ghz_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("ghz")
    config = exp.ExperimentConfig(
        run_id="ghz6",
        n_layers=1,
        target=exp.TargetSpec(kind="ghz", n_sites=6),
        train=TrainConfig(epochs_per_stage=2000),
    )
    runs = []
    for sub in ("first", "second"):
        config.output_dir = str(root / sub)
        runs.append(exp.cmd_train(config))
    return runs


def test_criterion_05_ghz_reachability(ghz_runs):
    rows = ser.read_csv(ghz_runs[0] / "metrics.csv")
    final = float(rows[-1]["loss_F"])
    verdict(5, final < 1e-3 and len(rows) <= 2000, f"GHZ N=6 N_L=1: F={final:.3e} after {len(rows)} epochs")


def test_criterion_10_determinism(ghz_runs):
    first, second = ((run / "metrics.csv").read_bytes() for run in ghz_runs)
    verdict(10, first == second, f"metrics.csv byte-identical on rerun ({len(first)} bytes)")


@pytest.fixture(scope="module")
def heisenberg48_run():
    target = heisenberg_target(48, 32).psi
    return grow_and_train(target, 3, TrainConfig())


@pytest.mark.slow
def test_criterion_06_layer_trend(heisenberg48_run):
    finals = [s.final_loss for s in heisenberg48_run.stages]
    ok = len(finals) == 3 and finals[0] > finals[1] > finals[2] and finals[1] < 0.5
    verdict(6, ok, "N=48 chi=32 stage-final F = " + ", ".join(f"{f:.4e}" for f in finals))


@pytest.mark.slow
def test_criterion_07_entropy_bound(heisenberg48_run):
    margin = min(r.n_layers * LN4 + 1e-9 - float(np.max(r.entropies)) for r in heisenberg48_run.log)
    verdict(7, margin >= 0, f"{len(heisenberg48_run.log)} epochs; min(n_L ln4 - max S_n) = {margin:.4f}")


def test_criterion_08_compression_ledger():
    target = heisenberg_target(48, 32).psi
    report = exp.evaluate(identity_circuit(48, 1), target, chi_evolve=4)
    r0 = report["compression_ratio_single_layer"]
    linear = all(compression_ratio(48, 32, n)[0] == n * r0 for n in range(1, 11))
    ok = report["chi_target"] == 32 and abs(report["compression_ratio"] - 752 / 94336) < 1e-12 and r0 < 1e-2 and linear
    verdict(8, ok, f"r(48,32,1) = {report['compression_ratio']:.6e} (752/94336 = {752 / 94336:.6e}); linear in N_L: {linear}")


@pytest.mark.slow
def test_criterion_09_random_mps_benchmark():
    mids = [bond_entropy(random_mps(48, chi, seed, "isometric"), 24) for chi in (2, 4, 8, 16, 32) for seed in range(5)]
    covers = min(mids) <= 0.6 and max(mids) >= 3.0

    log = grow_and_train(random_mps(48, 8, 0, "isometric"), 2, TrainConfig()).log
    losses = np.array([r.loss for r in log])
    running = np.minimum.accumulate(losses)
    training_ok = bool(np.all(np.isfinite(losses)) and np.all(np.diff(running) <= 0) and running[-1] < losses[0])

    f_of_s = {}
    for chi in (8, 64):
        target = heisenberg_target(48, chi).psi
        result = grow_and_train(target, 2, TrainConfig())
        f_of_s[chi] = (bond_entropy(target, 24), result.stages[-1].final_loss)
    (s8, f8), (s64, f64) = f_of_s[8], f_of_s[64]
    trend = s64 > s8 and f64 > f8

    verdict(
        9,
        covers and training_ok and trend,
        f"mid-chain S range [{min(mids):.3f}, {max(mids):.3f}] covers [0.6, 3.0]: {covers}; "
        f"random chi=8 N_L=2 run F {losses[0]:.3e} -> {running[-1]:.3e}; "
        f"Heisenberg S={s8:.4f} F={f8:.4e} vs S={s64:.4f} F={f64:.4e}",
    )


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
