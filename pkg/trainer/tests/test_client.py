import socket
import struct
import tempfile

import numpy as np
import pytest

from quadtrainer.client import (
    MSG_HELLO_ACK,
    PROTOCOL_VERSION,
    BridgeClient,
    ProtocolError,
    SimulatorProcess,
)
from quadtrainer.train import write_sim_config

PORT = 5701


@pytest.fixture
def sim_config(tmp_path):
    path = tmp_path / "sim.yaml"
    write_sim_config("hovering", "ctbr", 2, 5, 300, path)
    return path


class TestClient:
    def test_handshake_reports_dims(self, sim_config):
        with SimulatorProcess(PORT, config_path=sim_config) as sim:
            with sim.connect() as client:
                assert (client.n_envs, client.obs_dim, client.act_dim) == (2, 18, 4)
                assert len(client.config_hash) == 32

    def test_reset_and_step_shapes(self, sim_config):
        with SimulatorProcess(PORT + 1, config_path=sim_config) as sim:
            with sim.connect() as client:
                obs = client.reset()
                assert obs.shape == (2, 18) and obs.dtype == np.float32
                obs2, rew, done, info = client.step(np.zeros((2, 4), dtype=np.float32))
                assert obs2.shape == (2, 18)
                assert rew.shape == (2,) and rew.dtype == np.float32
                assert done.shape == (2,) and done.dtype == bool
                assert info["episode_step"].tolist() == [1, 1]

    def test_partial_reset(self, sim_config):
        with SimulatorProcess(PORT + 2, config_path=sim_config) as sim:
            with sim.connect() as client:
                client.reset()
                obs = client.reset([1])
                assert obs.shape == (1, 18)

    def test_wrong_action_shape_rejected_locally(self, sim_config):
        with SimulatorProcess(PORT + 3, config_path=sim_config) as sim:
            with sim.connect() as client:
                client.reset()
                with pytest.raises(ValueError):
                    client.step(np.zeros((2, 5), dtype=np.float32))
