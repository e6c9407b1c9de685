import numpy as np
import pytest

from gridfreq import Bus, Line, NoiseGains, PowerNetwork, uniform_fleet


def ten_bus_network(inertia=1.0, damping=0.1, governor_droop=15.0, injections=None):
    """Ring of ten generators with two chords (the bundled benchmark topology)."""
    injections = injections or {}
    buses = [
        Bus(id=i, inertia=inertia, damping=damping, governor_droop=governor_droop,
            injection=injections.get(i, 0.0))
        for i in range(10)
    ]
    lines = [Line(i, (i + 1) % 10, 5.0) for i in range(10)]
    lines += [Line(0, 4, 2.0), Line(2, 7, 3.0)]
    return PowerNetwork(buses, lines)


def path_network(n, susceptance=1.0, **bus_kwargs):
    defaults = dict(inertia=1.0, damping=0.1, governor_droop=15.0)
    defaults.update(bus_kwargs)
    buses = [Bus(id=i, **defaults) for i in range(n)]
    lines = [Line(i, i + 1, susceptance) for i in range(n - 1)]
    return PowerNetwork(buses, lines)


def high_noise(n):
    return tuple(NoiseGains(k1=0.1, k2=5.0, k3=5.0) for _ in range(n))


def random_connected_network(rng, n_min=3, n_max=8):
    n = int(rng.integers(n_min, n_max + 1))
    lines = [Line(i, (i + 1) % n, float(rng.uniform(0.5, 10.0))) for i in range(n)]
    pairs = {frozenset((l.from_bus, l.to_bus)) for l in lines}
    for _ in range(int(rng.integers(0, 3))):
        i, j = rng.choice(n, size=2, replace=False)
        if frozenset((int(i), int(j))) not in pairs:
            lines.append(Line(int(i), int(j), float(rng.uniform(0.5, 10.0))))
            pairs.add(frozenset((int(i), int(j))))
    buses = [
        Bus(id=i, inertia=float(rng.uniform(0.2, 3.0)), damping=float(rng.uniform(0.0, 0.5)),
            governor_droop=float(rng.uniform(5.0, 50.0)))
        for i in range(n)
    ]
    return PowerNetwork(buses, lines)


@pytest.fixture
def ten_bus():
    return ten_bus_network()


@pytest.fixture
def dc_fleet():
    return uniform_fleet(10, "DC", r_r=15.0)


@pytest.fixture
def idroop_fleet():
    return uniform_fleet(10, "IDROOP", r_r=15.0, delta=6.0, nu=0.9)
