import numpy as np
import pytest

from LimeJDS.config import IntegratorConfig
from LimeJDS.systems import LevyMeasure, make_system


def linear_system(a=-1.0, s=0.0, atoms=(), theta=1.0, sigma=1.0, coupling=0.0, name="linear"):
    """
    OU component 1 and dX2 = X2 (a dt + s dW + ∫g dÑ); ``coupling`` adds
    coupling * x2 to the drift of component 1.
    """
    levy2 = LevyMeasure.from_atoms(list(atoms), dim=1)
    return make_system(
        1, 1,
        drift1=lambda x1, x2: -theta * x1 + coupling * x2,
        diff1=sigma,
        drift2=lambda x1, x2: a * x2,
        diff2=lambda x1, x2: s * x2,
        jump2=lambda x1, x2, mark: mark[0] * x2,
        levy2=levy2,
        name=name,
    )


@pytest.fixture
def make_linear():
    return linear_system


@pytest.fixture
def quick_cfg():
    return IntegratorConfig(dt=1e-2, horizon=1.0, master_seed=7)


@pytest.fixture
def scenario_text():
    """Build INI scenario text from a name, parameter dict and integrator overrides."""

    def build(name, parameters=None, ensemble=4, outputs="paths, occupation, report", record_paths=2, **integrator):
        lines = ["[scenario]", f"name = {name}", f"ensemble = {ensemble}", f"outputs = {outputs}", f"record_paths = {record_paths}"]
        lines += ["", "[integrator]"]
        settings = {"dt": 0.01, "horizon": 2.0, "master_seed": 11}
        settings.update(integrator)
        lines += [f"{key} = {value}" for key, value in settings.items()]
        if parameters:
            lines += ["", "[parameters]"] + [f"{key} = {value}" for key, value in parameters.items()]
        return "\n".join(lines) + "\n"

    return build


@pytest.fixture
def unit_vectors():
    def draw(count, dim, seed=0):
        v = np.random.default_rng(seed).standard_normal((count, dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    return draw
