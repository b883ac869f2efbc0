import numpy as np
import pytest
from numpy.testing import assert_allclose

from oddgauge.evolve import (
    DataKind,
    EvolutionConfig,
    InitialDataSpec,
    InstabilityError,
    System,
    evolve,
    initial_data,
    run_states,
    step,
)
from oddgauge.geometry import Background, DomainError
from oddgauge.grid import GridSpec
from oddgauge.harmonics import ModeIndex
from oddgauge.modesystem import (
    GeneratorFields,
    RWFields,
    kerr_mode,
    pure_gauge_fields,
    scaled_gauge_residual,
    scaled_P,
)

BG = Background(1.0)


def grid(n, lo=-40.0, hi=150.0):
    return GridSpec(lo, hi, n).build(BG)


def test_zero_data_stays_zero():
    g = grid(256)
    cfg = EvolutionConfig(t_final=5.0, initial_data=InitialDataSpec(amplitude=0.0))
    res = evolve(cfg, g, BG)
    assert not np.any(res.final.fields()) and not np.any(res.final.rates())
    assert res.final.time == pytest.approx(5.0, abs=1e-14)


def test_kerr_drift_converges_at_fourth_order():
    drift = []
    for n in (512, 1024, 2048):
        g = grid(n)
        k = kerr_mode(BG, 0, g)
        _, states = run_states(k, BG, 10.0, stride=10**9)
        w = g.window(-20, 120)
        drift.append(np.abs(states[-1].fields() - k.fields())[:, w].max())
    ratios = np.log2(np.array(drift[:-1]) / np.array(drift[1:]))
    assert np.all(ratios > 3.5), drift


def test_kerr_amplitude_gives_scaled_P():
    g = grid(1024)
    spec = InitialDataSpec(kind=DataKind.KERR, amplitude=2.5)
    s = initial_data(spec, g, BG, ModeIndex(1))
    w = g.window(-35, 145)
    assert_allclose(scaled_P(s, BG)[w], (2.5 * 3 * g.lapse / g.r)[w], rtol=1e-6, atol=1e-14)


def test_momentarily_static_bump_satisfies_gauge_condition():
    g = grid(1024)
    for target in ("h1", "h2"):
        s = initial_data(InitialDataSpec(target_field=target), g, BG, ModeIndex(2))
        assert np.abs(scaled_gauge_residual(s, BG)).max() <= 1e-12
        assert not np.any(s.h0) and not np.any(s.dth1)


def test_initial_data_rejects_bad_targets():
    g = grid(64)
    with pytest.raises(DomainError):
        initial_data(InitialDataSpec(target_field="h2"), g, BG, ModeIndex(1))
    with pytest.raises(DomainError):
        initial_data(InitialDataSpec(kind=DataKind.KERR), g, BG, ModeIndex(2))
    with pytest.raises(DomainError):
        InitialDataSpec(width=0.0)


def test_flat_pulse_splits_at_unit_speed():
    # d'Alembert: a static Gaussian splits into two halves moving at speed one
    g = grid(2048, -60.0, 60.0)
    bump = np.exp(-(g.rstar**2) / 4)
    z = np.zeros(g.n)
    s = RWFields(ModeIndex(2), g, bump, z, z, z)
    _, states = run_states(s, BG, 20.0, stride=10**9, potential_off=True)
    exact = 0.5 * (np.exp(-((g.rstar - 20) ** 2) / 4) + np.exp(-((g.rstar + 20) ** 2) / 4))
    assert np.abs(states[-1].p - exact).max() < 1e-6


def test_outgoing_pulse_leaves_through_boundary():
    g = grid(2048, -60.0, 60.0)
    bump = np.exp(-((g.rstar - 30) ** 2) / 4)
    z = np.zeros(g.n)
    s = RWFields(ModeIndex(2), g, bump, z, -g.d1(bump), z)
    _, states = run_states(s, BG, 60.0, stride=10**9, potential_off=True)
    assert np.abs(states[-1].p).max() < 1e-3


def test_pure_gauge_evolution_tracks_generator():
    errs = []
    for n in (1024, 2048):
        g = grid(n)
        x0 = np.exp(-((g.rstar - 20) ** 2) / 8)
        gen = GeneratorFields(ModeIndex(2), g, x0, np.zeros(g.n))
        _, coupled = run_states(pure_gauge_fields(gen, BG), BG, 10.0, stride=10**9)
        _, gens = run_states(gen, BG, 10.0, stride=10**9)
        ref = pure_gauge_fields(gens[-1], BG)
        w = g.window(-20, 120)
        errs.append(np.abs(coupled[-1].fields() - ref.fields())[:, w].max())
    assert errs[-1] < 1e-5
    assert errs[0] / errs[1] > 8


def test_evolution_is_deterministic():
    g = grid(512)
    cfg = EvolutionConfig(t_final=10.0)
    a = evolve(cfg, g, BG)
    b = evolve(cfg, g, BG)
    assert a.times == b.times and a.probes == b.probes
    assert np.array_equal(a.final.fields(), b.final.fields())


def test_probe_columns_and_snapshots():
    g = grid(512)
    cfg = EvolutionConfig(t_final=5.0, snapshot_stride=4)
    res = evolve(cfg, g, BG)
    assert {"h1@r=6", "p@r=10", "q@r=20", "gauge_l2", "fields_l2"} <= set(res.probes)
    assert all(len(v) == len(res.times) for v in res.probes.values())
    assert len(res.snapshots) == (len(res.times) - 1) // 4 + 1


def test_growth_limit_raises_with_partial_result():
    g = grid(256)
    with pytest.raises(InstabilityError) as info:
        evolve(EvolutionConfig(t_final=5.0), g, BG, growth_limit=0.5)
    assert info.value.partial.aborted
    assert len(info.value.partial.times) == 2


def test_unstable_step_raises():
    g = grid(256)
    s = initial_data(InitialDataSpec(), g, BG, ModeIndex(2))
    with pytest.raises(InstabilityError), np.errstate(all="ignore"):
        for _ in range(2000):
            s = step(s, BG, 20 * g.h)


def test_causality_check():
    cfg = EvolutionConfig(t_final=200.0, causally_clean=True)
    with pytest.raises(DomainError):
        evolve(cfg, grid(256), BG)
    EvolutionConfig(t_final=20.0).check_causality(BG, GridSpec(-40.0, 150.0, 256))


def test_generator_system_initial_data():
    g = grid(256)
    s = initial_data(InitialDataSpec(kind=DataKind.PURE_GAUGE), g, BG, ModeIndex(2), System.GENERATOR)
    assert isinstance(s, GeneratorFields)
