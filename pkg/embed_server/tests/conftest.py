import os
import threading

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

# pieces chosen so several everyday words split into multiple word pieces
VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    ",", ".", "the", "a", "they", "we", "it",
    "watch", "##ed", "##es", "##s", "film", "dog", "cat", "ran", "run",
    "this", "afternoon", "un", "##aff", "##able", "bird", "sang", "on",
    "mat", "sat", "old", "slept", "because", "rain", "stay", "fast",
]


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A small randomly initialized BERT-style masked LM saved to disk."""
    import torch
    from transformers import BertConfig, BertForMaskedLM, BertTokenizerFast

    path = tmp_path_factory.mktemp("tiny-mlm")
    (path / "vocab.txt").write_text("\n".join(VOCAB), encoding="utf-8")
    tokenizer = BertTokenizerFast.from_pretrained(str(path))
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=40,
    )
    torch.manual_seed(1234)
    model = BertForMaskedLM(config)
    model.eval()
    tokenizer.save_pretrained(str(path))
    model.save_pretrained(str(path))
    return str(path)


@pytest.fixture(scope="session")
def encoder(tiny_checkpoint):
    from embed_server.encoder import MaskedLMEncoder

    return MaskedLMEncoder(tiny_checkpoint, device="cpu")


@pytest.fixture(scope="session")
def live_server(encoder):
    from embed_server.service import EmbedServer

    server = EmbedServer(encoder, port=0, max_batch=8)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


def crafted_sequences():
    """50 sequences covering masks, separators, and multi-piece words."""
    base = [
        ["they", "watched", "a", "film", "this", "afternoon"],
        ["the", "old", "cat", "slept", "on", "a", "mat"],
        ["a", "small", "unaffable", "dog", "ran"],  # small -> [UNK]
        ["we", "stayed", "because", "it", "rained"],
        ["the", "birds", "sang"],
    ]
    out = []
    for words in base:
        n = len(words)
        out.append(list(words))
        # substitution-style: one mask somewhere in the middle
        masked = list(words)
        masked[n // 2] = "<mask>"
        out.append(masked)
        # decontextualization-style: masks hugging a span
        out.append(["<mask>"] + words[1 : n - 1] + ["<mask>"])
        # movement-style: comma separators between rearranged segments
        out.append(words[2:] + [","] + words[:2])
        out.append([words[-1]] + [","] + words[:-1] + [","] + ["<mask>"])
        # leading mask
        out.append(["<mask>"] + words[1:])
        # double commas and short tails
        out.append([words[0], ",", words[1], ",", "<mask>"])
        out.append(words[:2] + [","] + words[:2])
        out.append(["<mask>", words[0]])
        out.append([words[0]])
    assert len(out) == 50
    return out


@pytest.fixture(scope="session")
def fifty_sequences():
    return crafted_sequences()
