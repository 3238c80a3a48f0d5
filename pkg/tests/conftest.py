import os

# BLAS threading hurts badly on the small dense blocks this suite solves;
# must be set before numpy loads (sdp also limits via threadpoolctl).
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np
import pytest

from koopctrl import edmd, lifting, sdp, sim, synthesis

# pinned benchmark configuration (mirrors cli.DEFAULT_CONFIG)
SEED = 227
TAU_S = 0.01
DURATION = 20.0
WARMUP = 15
X0_DATA = [-0.128, -0.948]
X0_CLOSED = [1.0, -0.6]
BETA = 1e5
C_Z = 1e-2


@pytest.fixture(scope="session")
def vdp_system():
    return sim.vanderpol(1.0)


@pytest.fixture(scope="session")
def vdp_dataset(vdp_system):
    steps = int(round(DURATION / TAU_S))
    excitation = sim.generate_excitation(SEED, -1.0, 1.0, steps)
    inputs = np.concatenate([np.zeros(WARMUP), excitation])
    traj = sim.simulate_open(vdp_system, X0_DATA, inputs, TAU_S)
    assert not traj.diverged
    return edmd.dataset_from_trajectory(traj, n_warmup=WARMUP, seed=SEED,
                                        source="vanderpol benchmark")


@pytest.fixture(scope="session")
def monomial_spec():
    return lifting.LiftingSpec.monomial(2, 5)


@pytest.fixture(scope="session")
def delay_spec():
    return lifting.LiftingSpec.delay(2, 15, 0)


@pytest.fixture(scope="session")
def monomial_model(vdp_dataset, monomial_spec):
    return edmd.fit_dataset(vdp_dataset, monomial_spec)


@pytest.fixture(scope="session")
def delay_model(vdp_dataset, delay_spec):
    return edmd.fit_dataset(vdp_dataset, delay_spec)


@pytest.fixture(scope="session")
def solver_options():
    return sdp.SolverOptions(max_iter=600)


@pytest.fixture(scope="session")
def monomial_controller(monomial_model, solver_options):
    region = synthesis.region_ball(monomial_model.dimension, C_Z)
    return synthesis.synthesize(monomial_model, region, beta=BETA,
                                solver_options=solver_options)


@pytest.fixture(scope="session")
def delay_controller(delay_model, solver_options):
    region = synthesis.region_ball(delay_model.dimension, C_Z)
    return synthesis.synthesize(delay_model, region, beta=BETA,
                                solver_options=solver_options)


@pytest.fixture(scope="session")
def monomial_robust_controller(monomial_model, solver_options):
    region = synthesis.region_ball(monomial_model.dimension, C_Z)
    return synthesis.synthesize(monomial_model, region, mode=synthesis.ROBUST,
                                l_eps=1e-6, beta=BETA, solver_options=solver_options)
