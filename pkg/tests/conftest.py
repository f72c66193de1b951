import numpy as np
import pytest

from fieldadv.fields import FieldConfig, GridConfig, RadianceField


def small_field(seed=0, levels=2, base=4, hidden=8, grid_scale=1.0):
    g = GridConfig(num_levels=levels, base_resolution=base, per_level_scale=2.0, table_size_log2=8,
                   features_per_level=2)
    f = RadianceField(FieldConfig(g, g, hidden=hidden), seed=seed)
    rng = np.random.default_rng(seed + 100)
    for k in ("geo.grid", "tex.grid"):
        f.params[k] = rng.uniform(-grid_scale, grid_scale, size=f.params[k].shape)
    return f


@pytest.fixture
def field():
    return small_field()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
