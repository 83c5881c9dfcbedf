import pytest

from sketchedit import data, training
from sketchedit.sampling import Pipeline
from sketchedit.seeds import derive_seed


@pytest.fixture(scope="session")
def tiny_samples():
    return [data.generate_garment(derive_seed("garment", 0, i)) for i in range(40)]


@pytest.fixture(scope="session")
def init_ckpt(tiny_samples):
    # steps=0 keeps the freshly initialized parameters; cheap and deterministic.
    cfg = training.TrainConfig(steps=0, T=50, proxy_steps=0, seed=5)
    return training.fit(tiny_samples, cfg)


@pytest.fixture(scope="session")
def pipe(init_ckpt):
    return Pipeline.from_checkpoint(init_ckpt)
