import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).resolve().parent))

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def accept_cfg():
    from accept_config import acceptance_config
    return acceptance_config()


@pytest.fixture(scope="session")
def artifacts(accept_cfg):
    """Dataset + trained checkpoints for the training-dependent criteria."""
    from accept_config import build_artifacts, dataset_dir, models_dir
    build_artifacts(progress=True)
    from driveworld.data import load_dataset
    from driveworld.net.training import WorldModel
    return {
        "dataset": load_dataset(dataset_dir()),
        "image": WorldModel.load(models_dir() / "image"),
        "joint_layout": WorldModel.load(models_dir() / "joint_layout"),
        "stitch_layout": WorldModel.load(models_dir() / "stitch_layout"),
        "joint_action": WorldModel.load(models_dir() / "joint_action"),
        "stitch_action": WorldModel.load(models_dir() / "stitch_action"),
    }


@pytest.fixture(scope="session")
def layout_generator(accept_cfg, artifacts):
    from driveworld.data import rig_from_config
    from driveworld.factorized import FactorizedGenerator
    return FactorizedGenerator(artifacts["joint_layout"], artifacts["stitch_layout"],
                               accept_cfg, rig_from_config(accept_cfg))


@pytest.fixture(scope="session")
def action_generator(accept_cfg, artifacts):
    from driveworld.data import rig_from_config
    from driveworld.factorized import FactorizedGenerator
    return FactorizedGenerator(artifacts["joint_action"], artifacts["stitch_action"],
                               accept_cfg, rig_from_config(accept_cfg))
