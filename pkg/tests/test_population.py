import math

import numpy as np
import pytest

from throttleplan import (
    DEFAULT_SEED,
    ParseError,
    Population,
    UserProfile,
    ValidationError,
    assign_tiers_binomial,
    generate_codec_uniform,
    generate_lognormal,
    load_population,
    save_population,
)


def test_profile_rejects_bad_fields():
    with pytest.raises(ValidationError):
        UserProfile(0, 0.0, 0.5)
    with pytest.raises(ValidationError):
        UserProfile(0, -1.0, 0.5)
    with pytest.raises(ValidationError):
        UserProfile(0, 1.0, 0.0)
    with pytest.raises(ValidationError):
        UserProfile(0, 1.0, 1.2)
    with pytest.raises(ValidationError):
        UserProfile(0, 1.0, 0.5, tier=-1)


def test_profile_demand():
    u = UserProfile(7, 2.5, 0.4)
    assert u.demand == pytest.approx(1.0)
    assert u.tier is None


def test_population_sorts_by_rate_and_keeps_ids():
    pop = Population(
        [UserProfile(10, 0.9, 1.0), UserProfile(11, 0.2, 0.5), UserProfile(12, 0.5, 1.0)]
    )
    assert [u.id for u in pop] == [11, 12, 10]
    assert list(pop.rates) == [0.2, 0.5, 0.9]
    assert pop.total_demand == pytest.approx(0.2 * 0.5 + 0.5 + 0.9)


def test_population_sort_is_stable_for_equal_rates():
    pop = Population(
        [UserProfile(3, 0.5, 0.1), UserProfile(1, 0.5, 0.2), UserProfile(2, 0.5, 0.3)]
    )
    assert [u.id for u in pop] == [3, 1, 2]


def test_population_rejects_empty_and_duplicate_ids():
    with pytest.raises(ValidationError):
        Population([])
    with pytest.raises(ValidationError):
        Population([UserProfile(0, 1.0, 1.0), UserProfile(0, 2.0, 1.0)])


def test_select_keeps_order_and_subsets(pop4):
    sub = pop4.select([0, 2])
    assert [u.id for u in sub] == [0, 2]
    assert list(sub.rates) == [0.3, 0.5]


def test_csv_round_trip(tmp_path):
    pop = Population(
        [
            UserProfile(0, 0.1 + 0.2, 1.0, tier=None),
            UserProfile(1, 1.0 / 3.0, 0.25, tier=2),
        ]
    )
    path = tmp_path / "pop.csv"
    save_population(pop, path)
    text = path.read_text()
    assert text.splitlines()[0] == "id,rate,activity,tier"
    back = load_population(path)
    assert len(back) == 2
    for a, b in zip(pop, back):
        assert a.id == b.id
        assert a.rate == b.rate  # repr floats survive exactly
        assert a.activity == b.activity
        assert a.tier == b.tier


def test_load_rejects_bad_header(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("id,rate,act\n0,1.0,0.5\n")
    with pytest.raises(ParseError):
        load_population(path)


def test_load_reports_line_number(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("id,rate,activity,tier\n0,1.0,0.5,\n1,zero,0.5,\n")
    with pytest.raises(ParseError) as exc:
        load_population(path)
    assert "line 3" in str(exc.value)


def test_generate_lognormal_is_deterministic():
    a = generate_lognormal(50, 0.0, 0.5, seed=7)
    b = generate_lognormal(50, 0.0, 0.5, seed=7)
    c = generate_lognormal(50, 0.0, 0.5, seed=8)
    assert list(a.rates) == list(b.rates)
    assert list(a.rates) != list(c.rates)
    assert all(u.activity == 1.0 for u in a)


def test_generate_lognormal_scale():
    # mean of lognormal(1, 0.25) is exp(1 + 0.25^2/2) ~ 2.8045; n=1000 draws
    # should land within a few percent of n times that.
    pop = generate_lognormal(1000, 1.0, 0.25, seed=DEFAULT_SEED)
    expected = 1000 * math.exp(1.0 + 0.25**2 / 2)
    assert abs(pop.total_demand - expected) / expected < 0.03


def test_generate_codec_uniform_draws_from_grids():
    rates = (0.2, 0.4, 0.6, 0.8, 1.0)
    pop = generate_codec_uniform(200, rates, seed=3)
    grid = {round(0.01 * k, 2) for k in range(1, 101)}
    for u in pop:
        assert u.rate in rates
        assert round(u.activity, 2) in grid
        assert u.activity > 0.0


def test_generate_codec_uniform_custom_activity_grid():
    pop = generate_codec_uniform(50, (0.5,), activity_grid=(0.25, 0.75), seed=1)
    assert {u.activity for u in pop} <= {0.25, 0.75}


def test_assign_tiers_binomial_three_tiers():
    pop = generate_lognormal(1000, 0.0, 0.5, seed=1)
    tiered = assign_tiers_binomial(pop, seed=1)
    tiers = np.asarray(tiered.tiers())
    assert set(np.unique(tiers)) <= {0, 1, 2}
    again = assign_tiers_binomial(pop, seed=1)
    assert list(again.tiers()) == list(tiered.tiers())
    # low-rate users should skew toward tier 0 and high-rate toward tier 2
    third = len(pop) // 3
    assert tiers[:third].mean() < tiers[-third:].mean()


def test_assign_tiers_binomial_rejects_other_counts():
    pop = generate_lognormal(10, 0.0, 0.5, seed=1)
    with pytest.raises(ValidationError):
        assign_tiers_binomial(pop, n_tiers=2, seed=1)
