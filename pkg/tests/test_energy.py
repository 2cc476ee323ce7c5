import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dramadist.energy import (BootstrapConfig, ContractError, ProbabilityVector,
                              baseline_distinctiveness, bootstrap_distinctiveness, energy_distance,
                              pairwise_energy_statistic)
from dramadist.synthetic import zipf_probs
from dramadist.text import NgramSample


def pv(*probs, support=None):
    support = support or tuple(f"g{i}" for i in range(len(probs)))
    return ProbabilityVector(tuple(support), np.array(probs, dtype=float))


def sample(**counts):
    return NgramSample.from_counts(counts)


def zipf_sample(rng, n, vocab=400):
    counts = rng.multinomial(n, zipf_probs(vocab, 1.0))
    return NgramSample.from_counts({f"g{i:04d}": int(c) for i, c in enumerate(counts)})


class TestEnergyDistance:
    def test_identity(self):
        p = pv(0.2, 0.3, 0.5)
        assert energy_distance(p, p) == 0.0

    def test_disjoint_point_masses(self):
        assert energy_distance(pv(1, 0), pv(0, 1)) == 2.0

    def test_worked_example(self):
        # 0.25**2 + 0.25**2
        assert energy_distance(pv(0.5, 0.5), pv(0.25, 0.75)) == pytest.approx(0.125, abs=1e-15)

    def test_mismatched_support(self):
        with pytest.raises(ContractError):
            energy_distance(pv(0.5, 0.5), pv(0.5, 0.5, support=("x", "y")))

    def test_probability_vector_contract(self):
        with pytest.raises(ContractError):
            pv(0.5, 0.6)
        with pytest.raises(ContractError):
            ProbabilityVector(("a", "a"), np.array([0.5, 0.5]))


class TestPairwiseOracle:
    def test_identical(self):
        s = sample(a=3, b=1, c=2)
        assert pairwise_energy_statistic(s, s) == pytest.approx(0.0, abs=1e-15)

    def test_hand_example(self):
        # 2(1 - 4/9) - (1 - 5/9) - (1 - 5/9) = 2/9
        x = sample(a=2, b=1)
        y = sample(a=1, b=2)
        assert pairwise_energy_statistic(x, y) == pytest.approx(2 / 9, abs=1e-15)

    def test_disjoint_singletons(self):
        assert pairwise_energy_statistic(sample(a=1), sample(b=1)) == 2.0

    def test_empty(self):
        with pytest.raises(ContractError):
            pairwise_energy_statistic(sample(), sample(a=1))

    def test_general_metric(self):
        # a non-discrete metric gives a different number: the oracle does not
        # hard-code the closed form
        x, y = sample(a=1), sample(b=1)
        assert pairwise_energy_statistic(x, y, metric=lambda u, v: 0.0 if u == v else 3.0) == 6.0


count_maps = st.dictionaries(
    st.sampled_from([f"g{i}" for i in range(50)]), st.integers(1, 40), min_size=1, max_size=50
)


@settings(max_examples=200, deadline=None)
@given(count_maps, count_maps)
def test_closed_form_matches_pairwise(cx, cy):
    x, y = NgramSample.from_counts(cx), NgramSample.from_counts(cy)
    support = sorted(set(cx) | set(cy))
    p = ProbabilityVector.from_counts(support, [cx.get(g, 0) for g in support])
    q = ProbabilityVector.from_counts(support, [cy.get(g, 0) for g in support])
    closed = energy_distance(p, q)
    assert abs(pairwise_energy_statistic(x, y) - closed) <= 1e-12
    assert energy_distance(q, p) == closed
    assert 0.0 <= closed <= 2.0


class TestBootstrap:
    def test_seed_determinism(self):
        rng = np.random.default_rng(0)
        x, y = zipf_sample(rng, 3000), zipf_sample(rng, 9000)
        cfg = BootstrapConfig(replicates=50, seed=7)
        assert bootstrap_distinctiveness(x, y, cfg) == bootstrap_distinctiveness(x, y, cfg)

    def test_parallel_equals_serial(self):
        rng = np.random.default_rng(1)
        x, y = zipf_sample(rng, 3000), zipf_sample(rng, 9000)
        cfg = BootstrapConfig(replicates=40, seed=3, keep_replicates=True)
        serial = bootstrap_distinctiveness(x, y, cfg)
        parallel = bootstrap_distinctiveness(x, y, replace(cfg, workers=3))
        assert serial == parallel
        assert np.array_equal(serial.replicate_values, parallel.replicate_values)
        assert np.array_equal(serial.baseline_values, parallel.baseline_values)

    def test_ci_ordering_and_forms(self):
        rng = np.random.default_rng(2)
        x, y = zipf_sample(rng, 2000), zipf_sample(rng, 5000)
        for form in ("root", "squared"):
            e = bootstrap_distinctiveness(x, y, BootstrapConfig(replicates=60, seed=1, form=form))
            assert 0 <= e.ci_low <= e.median <= e.ci_high
            assert 0 <= e.baseline_ci_low <= e.baseline_median <= e.baseline_ci_high

    def test_root_is_sqrt_of_squared_replicates(self):
        rng = np.random.default_rng(3)
        x, y = zipf_sample(rng, 2000), zipf_sample(rng, 5000)
        cfg = BootstrapConfig(replicates=41, seed=5, keep_replicates=True)
        sq = bootstrap_distinctiveness(x, y, replace(cfg, form="squared"))
        rt = bootstrap_distinctiveness(x, y, replace(cfg, form="root"))
        assert np.array_equal(sq.replicate_values, rt.replicate_values)
        # odd B: the median is an order statistic, so sqrt commutes with it
        assert rt.median == pytest.approx(math.sqrt(sq.median), rel=1e-12)

    def test_no_resample_identical_is_zero(self):
        s = sample(a=5, b=3, c=9)
        e = bootstrap_distinctiveness(s, s, BootstrapConfig(replicates=1, resample=False))
        assert e.median == 0.0 and e.ci_low == 0.0 and e.ci_high == 0.0

    def test_no_resample_matches_closed_form(self):
        x, y = sample(a=2, b=1), sample(a=1, b=2)
        e = bootstrap_distinctiveness(x, y, BootstrapConfig(replicates=1, resample=False, form="squared"))
        assert e.median == pytest.approx(2 / 9, abs=1e-15)

    def test_shared_draw_baseline_is_zero(self):
        s = sample(a=50, b=30, c=90)
        cfg = BootstrapConfig(replicates=20, seed=2, shared_baseline_draw=True)
        assert baseline_distinctiveness(s, cfg) == (0.0, 0.0, 0.0)

    def test_baseline_matches_estimate_baseline(self):
        rng = np.random.default_rng(4)
        x, y = zipf_sample(rng, 2000), zipf_sample(rng, 5000)
        cfg = BootstrapConfig(replicates=30, seed=9)
        e = bootstrap_distinctiveness(x, y, cfg)
        assert baseline_distinctiveness(x, cfg) == (e.baseline_median, e.baseline_ci_low, e.baseline_ci_high)

    def test_fixed_resample_size(self):
        rng = np.random.default_rng(5)
        x, y = zipf_sample(rng, 2000), zipf_sample(rng, 5000)
        e = bootstrap_distinctiveness(x, y, BootstrapConfig(replicates=10, resample_size=500))
        assert e.sample_size == 500

    @pytest.mark.parametrize(
        "cfg",
        [BootstrapConfig(replicates=1), BootstrapConfig(ci_level=1.0), BootstrapConfig(ci_level=0.0),
         BootstrapConfig(form="cubed"), BootstrapConfig(resample_size=0)],
    )
    def test_invalid_config(self, cfg):
        with pytest.raises(ContractError):
            bootstrap_distinctiveness(sample(a=1, b=1), sample(a=1), cfg)

    def test_empty_samples(self):
        with pytest.raises(ContractError):
            bootstrap_distinctiveness(sample(), sample(a=1), BootstrapConfig(replicates=2))
        with pytest.raises(ContractError):
            bootstrap_distinctiveness(sample(a=1), sample(), BootstrapConfig(replicates=2))
        with pytest.raises(ContractError):
            baseline_distinctiveness(sample(), BootstrapConfig(replicates=2))

    def test_invalid_config_lists_every_problem(self):
        problems = BootstrapConfig(replicates=1, ci_level=2.0, form="x").validate()
        assert len(problems) == 3


def two_symbol(rng, n):
    draws = rng.integers(0, 2, n)
    return sample(a=int((draws == 0).sum()), b=int((draws == 1).sum()))


def test_baseline_mean_matches_binomial_variance():
    # two resamples of size n from p_hat differ by N(0, 2 p(1-p)/n) per
    # coordinate; over both coordinates E sum (p1 - p2)^2 = 4 p(1-p)/n
    n = 10_000
    for seed in range(5):
        s = two_symbol(np.random.default_rng(seed), n)
        p = s.counts["a"] / n
        expected = 4 * p * (1 - p) / n
        cfg = BootstrapConfig(replicates=1000, seed=seed, form="squared", keep_replicates=True)
        e = bootstrap_distinctiveness(s, s, cfg)
        assert e.baseline_values.mean() == pytest.approx(expected, rel=0.2)
        # the squared gap is expected * chi2(1); its median is expected * 0.4549
        assert e.baseline_median == pytest.approx(expected * 0.45494, rel=0.2)


def test_baseline_shrinks_when_n_doubles():
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        small = zipf_sample(rng, 5_000)
        large = zipf_sample(rng, 10_000)
        cfg = BootstrapConfig(replicates=200, seed=seed, form="squared")
        wins += baseline_distinctiveness(large, cfg)[0] < baseline_distinctiveness(small, cfg)[0]
    assert wins == 20


def test_same_source_distance_is_twice_the_baseline():
    # halves of one stream: D replicates carry the sampling noise of both
    # halves plus the resampling noise, the baseline only the latter
    rng = np.random.default_rng(11)
    x, y = zipf_sample(rng, 100_000, vocab=3000), zipf_sample(rng, 100_000, vocab=3000)
    e = bootstrap_distinctiveness(x, y, BootstrapConfig(replicates=1000, seed=1, form="squared",
                                                        keep_replicates=True))
    ratio = e.replicate_values.mean() / e.baseline_values.mean()
    assert ratio == pytest.approx(2.0, rel=0.15)


@pytest.mark.xfail(strict=True, reason="same-source D sits near twice the baseline, outside its CI")
def test_same_source_median_within_baseline_ci():
    rng = np.random.default_rng(11)
    x, y = zipf_sample(rng, 100_000, vocab=3000), zipf_sample(rng, 100_000, vocab=3000)
    e = bootstrap_distinctiveness(x, y, BootstrapConfig(replicates=1000, seed=1))
    assert e.baseline_ci_low <= e.median <= e.baseline_ci_high


def test_mixture_monotone():
    from dramadist.synthetic import SyntheticSpec, generate_play
    from dramadist.text import char_3grams

    spec = SyntheticSpec(mixing=(0.0, 0.25, 0.5, 0.0, 0.0), words_per_character=8000, seed=3)
    play = generate_play(spec)
    grams = [char_3grams(c.utterances) for c in play.characters]
    medians = []
    for k in range(3):
        others = NgramSample.merge(g for j, g in enumerate(grams) if j != k)
        medians.append(bootstrap_distinctiveness(grams[k], others, BootstrapConfig(replicates=100, seed=k)).median)
    assert medians[0] < medians[1] < medians[2]
