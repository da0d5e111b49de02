import numpy as np
import pytest

from imarl.scenario import parse_scenario

# 1v1 marine duel on a small map: the fixture most hand traces run on.
DUEL_TEXT = """
[scenario]
name = duel
map_width = 16
map_height = 16
max_episode_steps = 50

[controlled]
marine 2 8

[enemy]
marine 10 8
"""


@pytest.fixture
def duel_spec():
    return parse_scenario(DUEL_TEXT)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
