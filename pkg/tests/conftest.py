import pytest
import torch

from punchline_tts.fixture import (
    build_fixture_corpus,
    fixture_registry,
    fixture_symbol_table,
)
from punchline_tts.model import desk_profile
from punchline_tts.training import load_training_corpus


@pytest.fixture(scope="session")
def registry():
    return fixture_registry()


@pytest.fixture(scope="session")
def symbol_table(registry):
    return fixture_symbol_table(registry)


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return build_fixture_corpus(str(root), speakers=("A", "B"), clips_per_speaker=3, seed=7)


@pytest.fixture(scope="session")
def fixture_utterances(fixture_corpus, symbol_table, registry):
    utterances, stats = load_training_corpus(
        fixture_corpus["root"], symbol_table, registry
    )
    return utterances


@pytest.fixture()
def tiny_config(symbol_table):
    """Small float64 config for numeric checks."""
    from punchline_tts.model import ProsodyConfig

    return desk_profile(
        symbol_count=len(symbol_table),
        hidden_width=16,
        encoder_blocks=2,
        decoder_blocks=2,
        attention_heads=2,
        ffn_filter_size=24,
        predictor_filter_size=12,
        prosody=ProsodyConfig(
            num_tokens=4,
            dim=8,
            num_heads=2,
            gru_hidden=8,
            conv_channels=(2, 2, 4, 4, 8, 8),
        ),
        dtype="float64",
    )


@pytest.fixture()
def tiny_model(tiny_config):
    from punchline_tts.model import AcousticModel

    torch.manual_seed(11)
    model = AcousticModel(tiny_config)
    model.eval()
    return model
