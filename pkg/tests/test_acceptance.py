"""Acceptance suite: one test per release criterion, each at its stated
tolerance, printing one pass line per criterion (run with -s to see them).

Numeric criteria run at 64-bit precision on desk-scale shapes; the overfit
smoke test uses the desk profile on a two-utterance synthetic fixture.
"""

import math
import time

import numpy as np
import pytest
import torch

from gradcheck import central_difference_grad, relative_error, sampled_entry_errors
from punchline_tts.corpus import compute_statistics, UtteranceRecord, Alignment
from punchline_tts.fixture import (
    build_fixture_corpus,
    fixture_registry,
    fixture_symbol_table,
)
from punchline_tts.frontend import (
    FillerRegistry,
    build_symbol_table,
    expand_special_tokens,
    mandarin_inventory,
    replace_fillers,
)
from punchline_tts.losses import duration_loss, half_weighted_loss
from punchline_tts.model import (
    AcousticModel,
    ProsodyConfig,
    apply_ablation,
    desk_profile,
    length_regulate,
)
from punchline_tts.model.cln import ClnAdapter, conditional_layer_norm, normalize_features
from punchline_tts.model.prosody import ProsodyAttention
from punchline_tts.training import (
    TrainSchedule,
    collate,
    load_checkpoint,
    load_training_corpus,
    save_checkpoint,
    train,
)

from test_frontend import SENTENCE_B, FILLER_B
from test_model import naive_expand
from test_prosody import attention_oracle


def report(number: int, text: str) -> None:
    print(f"[PASS] criterion {number}: {text}")


# --------------------------------------------------------------------- #
# 1. dataset summary arithmetic
# --------------------------------------------------------------------- #

SUMMARY_ROWS = {
    "A": (120, 505, 3357, 6.65),
    "B": (140, 622, 3824, 6.15),
    "C": (120, 626, 2116, 3.38),
    "D": (120, 587, 2891, 4.93),
}


def test_criterion_01_words_per_second_reproduction():
    start = time.monotonic()
    records, alignments, pitch, energy = [], {}, {}, {}
    for speaker, (clips, seconds, words, _) in SUMMARY_ROWS.items():
        base, extra = divmod(words, clips)
        for i in range(clips):
            utt = f"{speaker}{i}"
            records.append(
                UtteranceRecord(
                    utt, speaker, "x.wav", seconds / clips,
                    "字" * (base + (1 if i < extra else 0)), ("d",),
                )
            )
            alignments[utt] = Alignment(("d",), (4,))
            pitch[utt] = np.full(4, 100.0)
            energy[utt] = np.full(4, 0.5)
    stats = compute_statistics(records, alignments, pitch, energy)
    for speaker, (clips, seconds, words, published) in SUMMARY_ROWS.items():
        s = stats[speaker]
        assert s.clips == clips and s.words == words
        assert abs(s.words_per_second - published) <= 0.01, (
            f"{speaker}: {s.words_per_second} vs {published}"
        )
    elapsed = time.monotonic() - start
    assert elapsed < 1.0, f"statistics took {elapsed:.2f}s"
    report(1, f"all four words-per-second values within 0.01 ({elapsed*1000:.0f} ms)")


# --------------------------------------------------------------------- #
# 2. prosody attention oracle
# --------------------------------------------------------------------- #

def test_criterion_02_attention_oracle_and_normalization():
    torch.manual_seed(2)
    config = ProsodyConfig(
        num_tokens=2, dim=4, num_heads=1, gru_hidden=4, conv_channels=(2,) * 6
    )
    attention = ProsodyAttention(config).double()
    query = torch.tensor([0.3, -0.7, 0.2, 0.9], dtype=torch.float64)
    with torch.no_grad():
        produced = attention(query)
    expected = attention_oracle(
        query.tolist(),
        attention.tokens.tolist(),
        attention.query_proj.weight.T.tolist(),
        attention.key_proj.weight.T.tolist(),
        attention.value_proj.weight.T.tolist(),
    )
    worst = max(abs(a - b) for a, b in zip(produced.tolist(), expected))
    assert worst <= 1e-10, f"oracle mismatch {worst:.2e}"

    big = ProsodyAttention(
        ProsodyConfig(num_tokens=8, dim=32, num_heads=4, gru_hidden=8,
                      conv_channels=(2,) * 6)
    ).double()
    g = torch.Generator().manual_seed(7)
    max_dev = 0.0
    with torch.no_grad():
        for _ in range(1000):
            q = torch.randn(32, dtype=torch.float64, generator=g) * 3
            sums = big.attention_weights(q).sum(dim=-1)
            max_dev = max(max_dev, float((sums - 1).abs().max()))
    assert max_dev <= 1e-6, f"softmax normalization off by {max_dev:.2e}"
    report(2, f"explicit-arithmetic match {worst:.1e}; softmax sums off by {max_dev:.1e} over 1000 draws")


# --------------------------------------------------------------------- #
# 3. conditional layer norm algebra
# --------------------------------------------------------------------- #

def test_criterion_03_cln_algebra():
    torch.manual_seed(3)
    x = 2.0 * torch.randn(6, 12, dtype=torch.float64)
    ones = torch.ones(12, dtype=torch.float64)
    zeros = torch.zeros(12, dtype=torch.float64)
    identity = conditional_layer_norm(x, ones, zeros)
    assert float((identity - normalize_features(x)).abs().max()) <= 1e-6

    adapter = ClnAdapter(8, 12, "encoder").double()
    with torch.no_grad():
        adapter.bias_map.weight.normal_(std=0.2)
    e = torch.randn(8, dtype=torch.float64)
    g1, b1 = adapter.params(e)
    g2, b2 = adapter.params(2 * e)
    assert torch.equal(g2, 2 * g1) and torch.equal(b2, 2 * b1)

    gamma = torch.rand(12, dtype=torch.float64) * 2 - 1
    beta = torch.randn(12, dtype=torch.float64)
    base = conditional_layer_norm(x, gamma, beta)
    shifted = conditional_layer_norm(x + 7.3, gamma, beta)
    scaled = conditional_layer_norm(4.0 * x, gamma, beta)
    shift_dev = float((shifted - base).abs().max())
    scale_dev = float((scaled - base).abs().max())
    assert shift_dev <= 1e-5 and scale_dev <= 1e-5
    report(3, f"identity/homogeneity exact; shift {shift_dev:.1e}, scale {scale_dev:.1e}")


# --------------------------------------------------------------------- #
# 4. finite-difference gradient suite
# --------------------------------------------------------------------- #

def test_criterion_04_gradient_suite(tiny_model, fixture_utterances):
    start = time.monotonic()
    errors = {}

    torch.manual_seed(4)
    attention = ProsodyAttention(
        ProsodyConfig(num_tokens=3, dim=4, num_heads=1, gru_hidden=4,
                      conv_channels=(2,) * 6)
    ).double()
    query = torch.randn(4, dtype=torch.float64, requires_grad=True)
    probe = torch.randn(4, dtype=torch.float64)

    def attn_scalar():
        return (attention(query) * probe).sum()

    (g_query,) = torch.autograd.grad(attn_scalar(), query)
    errors["attention/query"] = relative_error(
        g_query, central_difference_grad(attn_scalar, query.data)
    )
    (g_tokens,) = torch.autograd.grad(attn_scalar(), attention.tokens)
    errors["attention/tokens"] = relative_error(
        g_tokens, central_difference_grad(attn_scalar, attention.tokens.data)
    )

    adapter = ClnAdapter(6, 10, "encoder").double()
    x = torch.randn(4, 10, dtype=torch.float64)
    e = torch.randn(6, dtype=torch.float64, requires_grad=True)
    w = torch.randn(4, 10, dtype=torch.float64)

    def cln_scalar():
        return (adapter(x, e) * w).sum()

    (g_e,) = torch.autograd.grad(cln_scalar(), e)
    errors["cln/condition"] = relative_error(
        g_e, central_difference_grad(cln_scalar, e.data)
    )

    hidden = torch.randn(5, tiny_model.config.hidden_width, dtype=torch.float64)
    e_model = torch.randn(tiny_model.config.prosody.dim, dtype=torch.float64,
                          requires_grad=True)

    def dur_scalar():
        return tiny_model.predict_duration(hidden, e_model).sum()

    (g_dur,) = torch.autograd.grad(dur_scalar(), e_model)
    errors["duration/condition"] = relative_error(
        g_dur, central_difference_grad(dur_scalar, e_model.data)
    )
    conv_w = tiny_model.duration_predictor.conv1.weight
    (g_conv,) = torch.autograd.grad(dur_scalar(), conv_w)
    errors["duration/conv"] = sampled_entry_errors(
        dur_scalar, conv_w.data, g_conv, n_entries=16
    )

    batch = collate([fixture_utterances[0]], torch.float64)
    batch.phoneme_ids = batch.phoneme_ids[:, :4]
    batch.phoneme_lengths = torch.tensor([4])
    batch.durations = torch.tensor([[2, 1, 2, 1]])
    batch.pitch = batch.pitch[:, :4]
    batch.energy = batch.energy[:, :4]
    mel_probe = torch.randn(1, 6, tiny_model.config.mel_bins, dtype=torch.float64,
                            generator=torch.Generator().manual_seed(0))
    enc_w = tiny_model.encoder_blocks[0].attention.qkv.weight

    def mel_scalar():
        return (tiny_model(batch, mode="train").mel * mel_probe).sum()

    (g_enc,) = torch.autograd.grad(mel_scalar(), enc_w)
    errors["mel/encoder-weight"] = sampled_entry_errors(
        mel_scalar, enc_w.data, g_enc, n_entries=10
    )

    elapsed = time.monotonic() - start
    worst = max(errors.values())
    assert worst <= 1e-4, f"worst relative error {worst:.2e} in {errors}"
    assert elapsed < 120.0, f"gradient suite took {elapsed:.1f}s"
    report(4, f"worst relative error {worst:.1e} across {len(errors)} checks ({elapsed:.1f}s)")


# --------------------------------------------------------------------- #
# 5. linear-domain duration loss
# --------------------------------------------------------------------- #

def test_criterion_05_duration_loss_properties():
    equal = torch.tensor([4.0, 7.0], dtype=torch.float64)
    assert float(duration_loss(equal, equal.clone())) == 0.0
    assert float(duration_loss(equal, equal + 0.01)) > 0.0
    hand = float(duration_loss(torch.tensor([2.0], dtype=torch.float64),
                               torch.tensor([4.0], dtype=torch.float64)))
    assert hand == pytest.approx(4.0)

    rng = np.random.default_rng(55)
    for _ in range(100):
        d1 = float(rng.uniform(1.0, 30.0))
        d2 = float(rng.uniform(d1 * 1.1, d1 * 10.0))
        r = float(rng.uniform(0.02, 0.5))
        lin1 = (d1 * r) ** 2
        lin2 = (d2 * r) ** 2
        assert lin2 / lin1 == pytest.approx((d2 / d1) ** 2, rel=1e-12)
        got1 = float(duration_loss(torch.tensor([d1 * (1 + r)], dtype=torch.float64),
                                   torch.tensor([d1], dtype=torch.float64)))
        got2 = float(duration_loss(torch.tensor([d2 * (1 + r)], dtype=torch.float64),
                                   torch.tensor([d2], dtype=torch.float64)))
        assert got2 / got1 == pytest.approx((d2 / d1) ** 2, rel=1e-9)
        log1 = (math.log(d1 * (1 + r)) - math.log(d1)) ** 2
        log2 = (math.log(d2 * (1 + r)) - math.log(d2)) ** 2
        assert log2 / log1 == pytest.approx(1.0, rel=1e-9)
    report(5, "zero-iff-equal, hand case 4, linear-vs-log ratio on 100 pairs")


# --------------------------------------------------------------------- #
# 6. half-weighted loss identities
# --------------------------------------------------------------------- #

def test_criterion_06_half_weighted_identities():
    rng = np.random.default_rng(66)
    for _ in range(50):
        v = torch.tensor(rng.uniform(0.01, 3.0, size=int(rng.integers(2, 40))),
                         dtype=torch.float64)
        split = math.ceil(v.numel() / 2)
        first = float(v[:split].mean())
        second = float(v[split:].mean())
        assert float(half_weighted_loss(v, 1.0)) == pytest.approx(first + second, rel=1e-12)
        assert float(half_weighted_loss(v, 0.0)) == pytest.approx(first, rel=1e-12)
        alphas = [0.0, 0.7, 1.3, 4.0]
        values = [float(half_weighted_loss(v, a)) for a in alphas]
        assert all(x < y for x, y in zip(values, values[1:]))
    report(6, "alpha identities exact and monotone over 50 random vectors")


# --------------------------------------------------------------------- #
# 7. filler round trip
# --------------------------------------------------------------------- #

def test_criterion_07_filler_round_trip():
    registry = fixture_registry()
    replaced = replace_fillers(SENTENCE_B, "B", registry)
    assert replaced == SENTENCE_B[: -len(FILLER_B)] + ["<spc1>"]
    assert expand_special_tokens(replaced, registry) == SENTENCE_B

    alphabet = ["d", "e5", "n", "i3", "zh", "ii1", "ao4", "b", "a5", "sp", "er2"]
    rng = np.random.default_rng(77)
    for _ in range(1000):
        length = int(rng.integers(0, 14))
        sequence = [alphabet[int(rng.integers(len(alphabet)))] for _ in range(length)]
        speaker = ("A", "B")[int(rng.integers(2))]
        out = replace_fillers(sequence, speaker, registry)
        assert expand_special_tokens(out, registry) == sequence
        assert len(out) <= len(sequence)
    report(7, "expand(replace(x)) == x on 1000 random sequences plus the worked example")


# --------------------------------------------------------------------- #
# 8. length regulator
# --------------------------------------------------------------------- #

def test_criterion_08_length_regulator():
    hidden = torch.randn(5, 3, dtype=torch.float64)
    assert torch.equal(length_regulate(hidden, torch.ones(5, dtype=torch.long)), hidden)

    rng = np.random.default_rng(88)
    for _ in range(500):
        t = int(rng.integers(1, 10))
        states = torch.from_numpy(rng.standard_normal((t, 4)))
        durations = rng.integers(0, 6, size=t)
        out = length_regulate(states, torch.from_numpy(durations))
        assert out.shape[0] == int(durations.sum())
        assert np.array_equal(out.numpy(), naive_expand(states.numpy(), durations.tolist()))
    report(8, "row conservation and naive-loop equality on 500 random cases")


# --------------------------------------------------------------------- #
# 9. overfit smoke test
# --------------------------------------------------------------------- #

def test_criterion_09_overfit_smoke(tmp_path):
    start = time.monotonic()
    corpus_dir = tmp_path / "overfit"
    build_fixture_corpus(str(corpus_dir), speakers=("A", "B"),
                         clips_per_speaker=1, seed=42)
    table = fixture_symbol_table()
    utterances, _ = load_training_corpus(str(corpus_dir), table, fixture_registry())
    assert len(utterances) == 2
    config = desk_profile(symbol_count=len(table))
    schedule = TrainSchedule(
        steps=800, batch_size=2, seed=0, warmup_steps=150,
        validation_interval=0, checkpoint_interval=10_000,
    )
    result = train(utterances, table, config, schedule, str(tmp_path / "run"))
    first, last = result.loss_log[0], result.loss_log[-1]
    mel_ratio = last["mel"] / first["mel"]
    assert mel_ratio < 0.10, f"mel L1 ratio {mel_ratio:.3f} >= 0.10"
    assert last["duration"] < 0.5, f"duration MSE {last['duration']:.3f} >= 0.5"

    # determinism: a shorter run with the same seed replays the same prefix
    prefix = train(
        utterances, table, config,
        TrainSchedule(steps=25, batch_size=2, seed=0, warmup_steps=150,
                      validation_interval=0, checkpoint_interval=10_000),
        str(tmp_path / "prefix"),
    )
    assert prefix.loss_log == result.loss_log[:25]

    elapsed = time.monotonic() - start
    assert elapsed < 600.0, f"overfit test took {elapsed:.0f}s"
    report(9, f"mel ratio {mel_ratio:.3f}, duration MSE {last['duration']:.3f}, "
              f"deterministic prefix, {elapsed:.0f}s")


# --------------------------------------------------------------------- #
# 10. ablation structure
# --------------------------------------------------------------------- #

def test_criterion_10_ablation_structure(symbol_table):
    def names(config):
        torch.manual_seed(10)
        return AcousticModel(config).parameter_names()

    base_config = desk_profile(symbol_count=len(symbol_table))
    base = names(base_config)

    no_dur = names(apply_ablation(base_config, "no_duration_cln"))
    removed = base - no_dur
    assert no_dur - base == set()
    assert removed == {
        n for n in base
        if "duration_predictor" in n and ("scale_map" in n or "bias_map" in n)
    } and len(removed) == 4

    plus_ve = names(apply_ablation(base_config, "pitch_energy_cln"))
    added = plus_ve - base
    assert base - plus_ve == set()
    assert len(added) == 8 and all(
        ("pitch_predictor" in n or "energy_predictor" in n)
        and ("scale_map" in n or "bias_map" in n)
        for n in added
    )

    registry = fixture_registry()
    with_tokens = build_symbol_table(mandarin_inventory(), registry)
    without = build_symbol_table(mandarin_inventory(), FillerRegistry.empty())
    assert with_tokens.special_tokens == ["<spc1>", "<spc2>"]
    assert without.special_tokens == []
    assert len(with_tokens) == len(without) + 2
    no_tokens_cfg = apply_ablation(base_config, "no_special_tokens")
    assert no_tokens_cfg.use_special_tokens is False
    emb_with = names(desk_profile(symbol_count=len(with_tokens)))
    assert emb_with == base  # same names; only the embedding row count differs
    torch.manual_seed(10)
    rows_with = AcousticModel(desk_profile(symbol_count=len(with_tokens)))
    torch.manual_seed(10)
    rows_without = AcousticModel(desk_profile(symbol_count=len(without)))
    diff = rows_with.embedding.weight.shape[0] - rows_without.embedding.weight.shape[0]
    assert diff == 2
    report(10, "parameter-name sets and symbol table change exactly as toggled")


# --------------------------------------------------------------------- #
# 11. checkpoint round trip and seeded determinism
# --------------------------------------------------------------------- #

def test_criterion_11_checkpoint_and_determinism(
    tmp_path, symbol_table, fixture_utterances
):
    config = desk_profile(
        symbol_count=len(symbol_table), hidden_width=16, encoder_blocks=1,
        decoder_blocks=1, ffn_filter_size=24, predictor_filter_size=12,
        prosody=ProsodyConfig(num_tokens=4, dim=8, num_heads=2, gru_hidden=8,
                              conv_channels=(2, 2, 4, 4, 8, 8)),
        dtype="float64",
    )
    torch.manual_seed(11)
    model = AcousticModel(config).eval()
    path = tmp_path / "rt.pt"
    save_checkpoint(str(path), model, symbol_table, 5)
    loaded = load_checkpoint(str(path))
    batch = collate(fixture_utterances[:1], torch.float64)
    with torch.no_grad():
        before = model(batch, mode="train")
        after = loaded.model(batch, mode="train")
    mel_dev = float((before.mel - after.mel).abs().max())
    dur_dev = float((before.duration_pred - after.duration_pred).abs().max())
    assert mel_dev <= 1e-10 and dur_dev <= 1e-10

    run_config = desk_profile(
        symbol_count=len(symbol_table), hidden_width=16, encoder_blocks=1,
        decoder_blocks=1, ffn_filter_size=24, predictor_filter_size=12,
        prosody=ProsodyConfig(num_tokens=4, dim=8, num_heads=2, gru_hidden=8,
                              conv_channels=(2, 2, 4, 4, 8, 8)),
    )
    schedule = TrainSchedule(steps=10, batch_size=2, seed=123, warmup_steps=10,
                             validation_interval=0, checkpoint_interval=10_000)
    a = train(fixture_utterances[:4], symbol_table, run_config, schedule,
              str(tmp_path / "a"))
    b = train(fixture_utterances[:4], symbol_table, run_config, schedule,
              str(tmp_path / "b"))
    assert a.loss_log == b.loss_log
    report(11, f"round-trip deviation {max(mel_dev, dur_dev):.1e}; identical seeded loss logs")
