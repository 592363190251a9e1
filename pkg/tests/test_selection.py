"""Selection policies: best-perturbation and random."""

import numpy as np
import pytest

from facepriv.selection import select_best, select_random


def test_select_best_male_min():
    idx, p = select_best([0.9, 0.2, 0.6, 0.7, 0.8], "male")
    assert (idx, p) == (1, 0.2)


def test_select_best_female_max():
    idx, p = select_best([0.9, 0.2, 0.6, 0.7, 0.8], "female")
    assert (idx, p) == (0, 0.9)


def test_select_best_empty():
    with pytest.raises(ValueError, match="empty"):
        select_best([], "male")


def test_select_best_unknown_gender():
    with pytest.raises(ValueError, match="gender"):
        select_best([0.5], "other")


def test_select_best_tie_lowest_index():
    assert select_best([0.3, 0.3, 0.3], "male") == (0, 0.3)
    assert select_best([0.3, 0.3, 0.3], "female") == (0, 0.3)
    assert select_best([0.5, 0.2, 0.2], "male") == (1, 0.2)


def brute_force_select(scores, gender):
    best_idx = 0
    for i in range(1, len(scores)):
        if gender == "male" and scores[i] < scores[best_idx]:
            best_idx = i
        if gender == "female" and scores[i] > scores[best_idx]:
            best_idx = i
    return best_idx, scores[best_idx]


def test_select_best_oracle_1000_cases():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        t = int(rng.integers(1, 9))
        scores = [float(s) for s in rng.uniform(0, 1, t)]
        gender = "male" if rng.integers(2) else "female"
        assert select_best(scores, gender) == brute_force_select(scores,
                                                                 gender)


def test_select_best_monotone_transform_invariance():
    rng = np.random.default_rng(1)
    for _ in range(100):
        scores = rng.uniform(0, 1, 5)
        for gender in ("male", "female"):
            base_idx, _ = select_best(scores, gender)
            idx2, _ = select_best(list(0.1 + 0.5 * scores), gender)
            assert idx2 == base_idx


def test_select_best_pointwise_dominance():
    rng = np.random.default_rng(2)
    for _ in range(200):
        scores = rng.uniform(0, 1, 5)
        _, p_male = select_best(scores, "male")
        assert all(p_male <= s for s in scores)
        _, p_female = select_best(scores, "female")
        assert all(p_female >= s for s in scores)


def test_select_random_singleton():
    for seed in range(10):
        assert select_random(1, seed, f"img{seed}") == 0


def test_select_random_deterministic():
    a = select_random(5, 42, "face.png")
    b = select_random(5, 42, "face.png")
    assert a == b
    assert 0 <= a < 5


def test_select_random_depends_on_inputs():
    draws = {select_random(50, 42, f"img{i}") for i in range(20)}
    assert len(draws) > 1
    seeds = {select_random(50, s, "img") for s in range(20)}
    assert len(seeds) > 1


def test_select_random_invalid_t():
    with pytest.raises(ValueError):
        select_random(0, 1)


def test_select_random_uniform_3_sigma():
    t, n = 5, 10000
    counts = np.zeros(t, dtype=int)
    for i in range(n):
        counts[select_random(t, 7, f"image_{i}")] += 1
    # binomial 3-sigma bound around p = 0.2
    sigma = np.sqrt(0.2 * 0.8 / n)
    for c in counts:
        assert abs(c / n - 0.2) <= 3 * sigma
