import math

import numpy as np
import pytest

from aolcorr.astro import OsculatingElements, elements_to_cart


def random_leo_elements(rng, e_max=0.05):
    """One random LEO element set: a in [6578, 7578] km, e in [0, e_max],
    i in [0, pi], angles uniform."""
    return OsculatingElements(
        a=rng.uniform(6578.0, 7578.0),
        e=rng.uniform(0.0, e_max),
        i=rng.uniform(0.0, math.pi),
        raan=rng.uniform(0.0, 2.0 * math.pi),
        argp=rng.uniform(0.0, 2.0 * math.pi),
        true_anomaly=rng.uniform(0.0, 2.0 * math.pi),
    )


def random_leo_state(rng, e_max=0.05, epoch=0.0):
    return elements_to_cart(random_leo_elements(rng, e_max), epoch=epoch)


def circular_state(a=7000.0, epoch=0.0, inclination=0.0):
    """Circular orbit state at the ascending node."""
    el = OsculatingElements(a=a, e=0.0, i=inclination, raan=0.0, argp=0.0, true_anomaly=0.0)
    return elements_to_cart(el, epoch=epoch)


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
