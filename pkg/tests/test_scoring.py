import itertools

import numpy as np
import pytest
from scipy import stats

from app.core.exceptions import ScoringError, SubmissionFormatError
from app.models.submission import Submission
from app.models.trigger import Trigger
from app.services.scoring import (
    compare_submissions,
    nmae_range,
    parse_submission_csv,
    score_submission,
    split_triggers,
    wilcoxon_signed_rank,
    write_submission_csv,
)


def _oracle(y, y_hat):
    """Implementacao escalar independente da metrica"""
    flat_y = [float(v) for v in np.ravel(y)]
    flat_hat = [float(v) for v in np.ravel(y_hat)]
    span = max(flat_y) - min(flat_y)
    total = 0.0
    for a, b in zip(flat_y, flat_hat):
        total += min(abs(a - b) / span, 1.0)
    return total / len(flat_y)


def _random_submission(rng, ids):
    return Submission(candidates={i: Trigger(values=rng.normal(size=(75, 3))) for i in ids})


# ============================================================
# Metrica
# ============================================================

def test_metric_extremes(rng):
    y = rng.normal(size=(75, 3))
    span = y.max() - y.min()
    assert nmae_range(y, y) == 0.0
    assert nmae_range(y, y + 2 * span) == 1.0


def test_metric_hand_example():
    y = np.zeros((75, 3))
    y.flat[1] = 2.0
    y_hat = y.copy()
    y_hat.flat[0] = 0.5
    assert nmae_range(y, y_hat) == pytest.approx(0.25 / 225, abs=1e-15)
    y_hat.flat[0] = 1.0
    assert nmae_range(y, y_hat) == pytest.approx(0.5 / 225, abs=1e-15)


def test_metric_matches_scalar_oracle(rng):
    for _ in range(1000):
        y = rng.normal(size=(75, 3)) * rng.uniform(0.1, 10)
        y_hat = y + rng.normal(size=(75, 3)) * rng.uniform(0.01, 5)
        score = nmae_range(y, y_hat)
        assert abs(score - _oracle(y, y_hat)) <= 1e-12
        assert 0.0 <= score <= 1.0


def test_metric_joint_scale_invariance_and_monotonicity(rng):
    y = rng.normal(size=(75, 3))
    y_hat = rng.normal(size=(75, 3))
    base = nmae_range(y, y_hat)
    for c in (-3.0, 0.5, 7.0):
        assert nmae_range(c * y, c * y_hat) == pytest.approx(base, rel=1e-12)
    closer = y_hat + 0.5 * (y - y_hat)
    assert nmae_range(y, closer) <= base


def test_metric_errors(rng):
    y = rng.normal(size=(75, 3))
    with pytest.raises(ScoringError, match="zero range"):
        nmae_range(np.ones((75, 3)), y)
    with pytest.raises(ScoringError, match="shape"):
        nmae_range(y, y[:74])
    bad = y.copy()
    bad[3, 2] = np.nan
    with pytest.raises(ScoringError):
        nmae_range(y, bad)


def test_per_channel_range_falls_back_for_constant_channel():
    y = np.zeros((75, 3))
    y[:, 0] = np.linspace(0, 10, 75)
    y[:, 1] = np.linspace(0, 1, 75)
    y_hat = y + 0.1
    assert nmae_range(y, y_hat) == pytest.approx(0.01)
    expected = (75 * 0.01 + 75 * 0.1 + 75 * 0.01) / 225
    assert nmae_range(y, y_hat, per_channel=True) == pytest.approx(expected)


# ============================================================
# Split e score
# ============================================================

def test_split_sizes_and_determinism():
    split = split_triggers(range(1, 46), 0.33, seed=4)
    assert len(split.public_ids) == 15
    assert len(split.private_ids) == 30
    assert split == split_triggers(range(1, 46), 0.33, seed=4)
    assert split != split_triggers(range(1, 46), 0.33, seed=5)


def test_split_is_a_partition(rng):
    for _ in range(50):
        n = int(rng.integers(2, 101))
        ids = list(range(1, n + 1))
        split = split_triggers(ids, 0.33, seed=int(rng.integers(1000)))
        assert set(split.public_ids) | set(split.private_ids) == set(ids)
        assert not set(split.public_ids) & set(split.private_ids)
        assert len(split.public_ids) == int(np.floor(0.33 * n + 0.5))


def test_split_errors():
    with pytest.raises(ScoringError):
        split_triggers([], 0.33)
    with pytest.raises(ScoringError):
        split_triggers([1, 1, 2], 0.33)


def test_perfect_submission_scores_zero(rng):
    truth = _random_submission(rng, range(1, 46))
    report = score_submission(truth, truth, split_triggers(truth.ids, seed=1))
    assert report.final_score == 0.0
    assert report.public_score == 0.0 and report.private_score == 0.0


def test_final_score_decomposition(rng):
    truth = _random_submission(rng, range(1, 46))
    guess = _random_submission(rng, range(1, 46))
    split = split_triggers(truth.ids, seed=2)
    report = score_submission(guess, truth, split)
    assert report.final_score == (15 * report.public_score + 30 * report.private_score) / 45
    assert report.final_score == pytest.approx(np.mean(list(report.per_trigger.values())), rel=1e-12)


def test_zero_submission_is_the_null_baseline(rng):
    truth = _random_submission(rng, range(1, 6))
    zero = Submission(candidates={i: Trigger.zeros() for i in truth.ids})
    report = score_submission(zero, truth, split_triggers(truth.ids, seed=0))
    for model_id, trig in truth.items():
        assert report.per_trigger[model_id] == nmae_range(trig, np.zeros((75, 3)))


def test_missing_and_unknown_ids_are_rejected(rng):
    truth = _random_submission(rng, range(1, 6))
    partial = Submission(candidates={i: truth[i] for i in (1, 2, 4, 5)})
    with pytest.raises(ScoringError, match="model_id 3"):
        score_submission(partial, truth)
    extra = Submission(candidates={**truth.candidates, 9: truth[1]})
    with pytest.raises(ScoringError, match="model_id 9"):
        score_submission(extra, truth)


# ============================================================
# Wilcoxon
# ============================================================

def _brute_force_p(a, b):
    diff = np.asarray(a) - np.asarray(b)
    diff = diff[diff != 0]
    ranks = stats.rankdata(np.abs(diff))
    total = ranks.sum()
    w_obs = min(ranks[diff > 0].sum(), ranks[diff < 0].sum())
    hits = 0
    for signs in itertools.product((0, 1), repeat=len(ranks)):
        w_plus = float(np.dot(signs, ranks))
        if min(w_plus, total - w_plus) <= w_obs + 1e-9:
            hits += 1
    return hits / 2 ** len(ranks)


def test_wilcoxon_all_same_sign():
    b = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    result = wilcoxon_signed_rank(b + 0.01 * np.arange(1, 6), b)
    assert result.statistic == 0
    assert result.p_value == pytest.approx(2 / 32)
    assert result.method == "exact"


def test_wilcoxon_symmetry(rng):
    a = rng.normal(size=12)
    b = rng.normal(size=12)
    ab = wilcoxon_signed_rank(a, b)
    ba = wilcoxon_signed_rank(b, a)
    assert ab.p_value == ba.p_value
    assert ab.w_plus == ba.w_minus
    assert ab.w_plus + ab.w_minus == 12 * 13 / 2


def test_wilcoxon_exact_matches_brute_force():
    rng = np.random.default_rng(99)
    for _ in range(100):
        n = int(rng.integers(5, 11))
        # valores arredondados para provocar empates
        a = np.round(rng.normal(size=n), 1)
        b = np.round(rng.normal(size=n), 1)
        if np.count_nonzero(a - b) < 5:
            continue
        result = wilcoxon_signed_rank(a, b)
        assert result.p_value == pytest.approx(_brute_force_p(a, b), abs=1e-12)


def test_wilcoxon_normal_approximation_for_large_n(rng):
    a = rng.normal(size=40)
    b = a + rng.normal(0.3, 1.0, size=40)
    result = wilcoxon_signed_rank(a, b)
    assert result.method == "normal"
    reference = stats.wilcoxon(a, b, correction=False, method="approx")
    assert result.p_value == pytest.approx(reference.pvalue, rel=1e-9)


def test_wilcoxon_errors():
    with pytest.raises(ScoringError, match="zero"):
        wilcoxon_signed_rank([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])
    with pytest.raises(ScoringError, match="at least 5"):
        wilcoxon_signed_rank([1, 2, 3, 4, 5], [1, 2, 3, 0, 0])


def test_compare_submissions(rng):
    truth = _random_submission(rng, range(1, 11))
    good = Submission(candidates={i: Trigger(values=t.values + 0.01 * rng.normal(size=(75, 3))) for i, t in truth.items()})
    bad = _random_submission(rng, range(1, 11))
    split = split_triggers(truth.ids, seed=0)
    result = compare_submissions(score_submission(good, truth, split), score_submission(bad, truth, split))
    assert result.n == 10
    assert result.p_value == pytest.approx(2 / 1024)


# ============================================================
# CSV
# ============================================================

def test_csv_round_trip_and_cardinality(tmp_path, rng):
    sub = _random_submission(rng, range(1, 46))
    path = write_submission_csv(sub, tmp_path / "submission.csv")
    lines = path.read_bytes().split(b"\n")
    assert lines[-1] == b""
    assert len(lines) - 1 == 10126
    assert lines[0] == b"model_id,channel,sample_index,value"
    parsed = parse_submission_csv(path)
    assert parsed.ids == list(range(1, 46))
    for i, trig in sub.items():
        assert np.array_equal(parsed[i].values, trig.values)
    again = write_submission_csv(parsed, tmp_path / "again.csv")
    assert again.read_bytes() == path.read_bytes()


def test_row_order_does_not_matter(tmp_path, rng):
    sub = _random_submission(rng, range(1, 4))
    path = write_submission_csv(sub, tmp_path / "s.csv")
    header, *rows = path.read_text().splitlines()
    shuffled = tmp_path / "shuffled.csv"
    shuffled.write_text("\n".join([header] + list(np.random.default_rng(0).permutation(rows))) + "\n")
    parsed = parse_submission_csv(shuffled)
    truth = _random_submission(rng, range(1, 4))
    split = split_triggers(truth.ids, seed=0)
    assert score_submission(parsed, truth, split) == score_submission(sub, truth, split)


def _write_rows(path, rows):
    path.write_text("model_id,channel,sample_index,value\n" + "".join(f"{r}\n" for r in rows))
    return path


def test_csv_errors_name_row_or_id(tmp_path, rng):
    sub = _random_submission(rng, [1, 2, 3, 4, 5, 6, 8])
    path = write_submission_csv(sub, tmp_path / "s.csv")
    with pytest.raises(SubmissionFormatError, match="model_id 7"):
        parse_submission_csv(path)

    header, *rows = path.read_text().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join([header] + rows[:10] + ["1,44,10,abc"] + rows[11:]) + "\n")
    with pytest.raises(SubmissionFormatError, match="row 12"):
        parse_submission_csv(bad)

    bad.write_text("\n".join([header] + rows[:4] + ["1,47,4,0.0"] + rows[5:]) + "\n")
    with pytest.raises(SubmissionFormatError, match="row 6: channel"):
        parse_submission_csv(bad)

    bad.write_text("\n".join([header] + rows[:4] + ["1,44,75,0.0"] + rows[5:]) + "\n")
    with pytest.raises(SubmissionFormatError, match="row 6: sample_index"):
        parse_submission_csv(bad)

    bad.write_text("\n".join([header] + rows[1:]) + "\n")
    with pytest.raises(SubmissionFormatError, match="missing row"):
        parse_submission_csv(bad, expected_ids=[1, 2, 3, 4, 5, 6, 8])

    bad.write_text("id,channel,sample_index,value\n1,44,0,0.0\n")
    with pytest.raises(SubmissionFormatError, match="row 1: header"):
        parse_submission_csv(bad)

    with pytest.raises(SubmissionFormatError, match="outside 1..45"):
        parse_submission_csv(_write_rows(tmp_path / "big.csv", ["46,44,0,0.0"]), expected_ids=[46])
