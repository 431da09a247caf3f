import math

import pytest

import ntrf

WORDS = ["ab", "ba", "abc", "cab", "a", "bc", "ca", "bca", "cc", "ab"] * 6


def test_vocabulary_round_trip():
    vocab = ntrf.Vocabulary.build(["a b c", "c a"], ntrf.TokenLevel.WORD)
    assert vocab.size == 3 + 3
    ids = vocab.encode("c a b", ntrf.TokenLevel.WORD)
    assert ids[0] == 0 and ids[-1] == 1
    assert vocab.decode(ids, ntrf.TokenLevel.WORD) == "c a b"


def test_ngram_distribution_sums_to_one():
    data = [[0, 2, 3, 1], [0, 3, 3, 2, 1], [0, 4, 1]]
    model = ntrf.NGramModel.train(data, 2, 5)
    total = sum(model.prob([0], w) for w in range(5))
    assert total == pytest.approx(1.0, abs=1e-12)
    assert model.logprob_sentence([0, 2, 3, 1]) < 0.0


def test_noise_batch_records_log_probabilities():
    base = ntrf.NGramModel.train([[0, 2, 3, 1], [0, 3, 1]], 1, 4)
    noise = ntrf.NoiseDistribution([0.0, 0.5, 0.5], base)
    seqs, log_pn = noise.draw_batch(4, 3, 7)
    assert len(seqs) == 12 and len(log_pn) == 12
    for seq, lp in zip(seqs, log_pn):
        assert noise.log_prob(seq) == lp


def test_wer_example():
    counts = ntrf.wer("the cat sat", "the bat sat down")
    assert counts["substitutions"] == 1
    assert counts["insertions"] == 1
    assert counts["wer"] == pytest.approx(2.0 / 3.0)
    with pytest.raises(ntrf.Error):
        ntrf.wer("", "a")


def test_posterior_two_thirds():
    assert ntrf.posterior_data(math.log(2.0), 0.0, 1) == pytest.approx(2.0 / 3.0)


def test_tiny_training_run(tmp_path):
    (tmp_path / "train.txt").write_text("\n".join(WORDS) + "\n")
    (tmp_path / "valid.txt").write_text("ab\nca\nbc\n")
    ini = f"""
[run]
seed = 3
output_dir = {tmp_path / "run"}
[corpus]
train = {tmp_path / "train.txt"}
valid = {tmp_path / "valid.txt"}
level = char
max_length = 5
[potential]
embedding = 4
hidden = 4
[noise]
order = 2
[train]
ratio = 4
batch_size = 5
epochs = 2
track_exact = true
"""
    cfg = ntrf.ExperimentConfig.parse(ini, str(tmp_path), False)
    result = ntrf.train_trf(cfg)
    # Record 0 describes the initial model.
    assert [e["epoch"] for e in result["epochs"]] == [0, 1, 2]
    assert all(math.isfinite(e["valid_nll"]) for e in result["epochs"])

    model = ntrf.TrfModel.load(result["bundle"])
    log_z = model.exact_log_normalizers()
    assert len(log_z) == model.max_length
    exact = model.nll([model.vocab.encode("ab", ntrf.TokenLevel.CHAR)], True)
    assert math.isfinite(exact)

    prior = model.length_prior
    model.zeta = [z if p > 0 else old for z, p, old in zip(log_z, prior, model.zeta)]
    gap, _ = model.zeta_gap()
    assert max(abs(g) for g, p in zip(gap, prior) if p > 0) < 1e-9


def test_gradcheck_detects_fault():
    assert ntrf.gradcheck(instances=2, seed=1)["passed"]
    assert not ntrf.gradcheck(instances=2, seed=1, fault=0.1)["passed"]
