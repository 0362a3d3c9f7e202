"""Word-level hidden states from a masked language model.

Sequences are encoded with the checkpoint's own tokenizer in
words-are-pretokenized mode, so each input word owns a known, non-empty
block of word pieces: the reserved mask placeholder becomes the model's
mask token (one piece, never split) and a word the tokenizer would erase
becomes the unknown token.  A word's output vector is the mean of its
pieces' hidden states at the requested layer; layer 0 is the embedding
output, layer l the output of transformer block l.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

MASK_PLACEHOLDER = "<mask>"


class EncoderError(Exception):
    pass


class LayerOutOfRange(EncoderError):
    pass


class SequenceTooLong(EncoderError):
    pass


@dataclass
class EncodedWords:
    ids: list[int]  # full input ids, special tokens included
    word_slices: list[tuple[int, int]]  # piece positions per word, into ids


class MaskedLMEncoder:
    def __init__(self, model_path: str, device: str = "cpu"):
        self.model_path = model_path
        self.tokenizer = AutoTokenizer.from_pretrained(model_path, use_fast=True)
        if self.tokenizer.mask_token_id is None:
            raise EncoderError(f"{model_path} has no mask token; not a masked LM")
        if not self.tokenizer.is_fast:
            raise EncoderError("a fast tokenizer is required for word alignment")
        self.device = torch.device(device)
        self.model = AutoModel.from_pretrained(model_path).to(self.device)
        self.model.eval()
        self.num_layers = int(self.model.config.num_hidden_layers)
        self.dim = int(self.model.config.hidden_size)
        self.max_tokens = int(
            getattr(self.model.config, "max_position_embeddings", 0) or 10**9
        )

    def check_layer(self, layer: int) -> None:
        if not 0 <= layer <= self.num_layers:
            raise LayerOutOfRange(f"layer {layer} out of range 0..{self.num_layers}")

    def _translate(self, words: Sequence[str]) -> list[str]:
        out = []
        for word in words:
            if word == MASK_PLACEHOLDER:
                out.append(self.tokenizer.mask_token)
            elif not self.tokenizer.tokenize(word):
                # normalization erased it; keep the row with an unk piece
                if self.tokenizer.unk_token is None:
                    raise EncoderError(f"cannot encode {word!r} and no unk token exists")
                out.append(self.tokenizer.unk_token)
            else:
                out.append(word)
        return out

    def _encode_sequences(self, sequences: Sequence[Sequence[str]]) -> list[EncodedWords]:
        if not sequences or any(not seq for seq in sequences):
            raise EncoderError("sequences must be non-empty lists of words")
        translated = [self._translate(seq) for seq in sequences]
        batch = self.tokenizer(translated, is_split_into_words=True)
        encoded = []
        for idx, words in enumerate(translated):
            ids = batch["input_ids"][idx]
            if len(ids) > self.max_tokens:
                raise SequenceTooLong(
                    f"{len(ids)} pieces exceed the model's limit of {self.max_tokens}"
                )
            word_ids = batch.word_ids(idx)
            slices: list[tuple[int, int]] = [(-1, -1)] * len(words)
            for pos, w in enumerate(word_ids):
                if w is None:
                    continue
                start, end = slices[w]
                if start == -1:
                    slices[w] = (pos, pos + 1)
                else:
                    if pos != end:
                        raise EncoderError(f"word {w} has non-contiguous pieces")
                    slices[w] = (start, pos + 1)
            for w, (start, end) in enumerate(slices):
                if start == -1:
                    raise EncoderError(f"word {words[w]!r} produced no pieces")
                if words[w] == self.tokenizer.mask_token and (
                    end - start != 1 or ids[start] != self.tokenizer.mask_token_id
                ):
                    raise EncoderError("mask token was split by the tokenizer")
            encoded.append(EncodedWords(ids=list(ids), word_slices=slices))
        return encoded

    @torch.no_grad()
    def encode_batch(
        self, sequences: Sequence[Sequence[str]], layers: Sequence[int]
    ) -> dict[int, list[np.ndarray]]:
        """One T x d float32 matrix per sequence per layer (T = word count)."""
        for layer in layers:
            self.check_layer(layer)
        encoded = self._encode_sequences(sequences)
        max_len = max(len(e.ids) for e in encoded)
        pad_id = self.tokenizer.pad_token_id or 0
        input_ids = torch.full((len(encoded), max_len), pad_id, dtype=torch.long)
        attention = torch.zeros((len(encoded), max_len), dtype=torch.long)
        for row, enc in enumerate(encoded):
            input_ids[row, : len(enc.ids)] = torch.tensor(enc.ids, dtype=torch.long)
            attention[row, : len(enc.ids)] = 1
        out = self.model(
            input_ids=input_ids.to(self.device),
            attention_mask=attention.to(self.device),
            output_hidden_states=True,
        )
        results: dict[int, list[np.ndarray]] = {layer: [] for layer in layers}
        for layer in layers:
            hidden = out.hidden_states[layer].cpu()
            for row, enc in enumerate(encoded):
                mat = torch.stack(
                    [hidden[row, a:b].mean(dim=0) for a, b in enc.word_slices]
                )
                results[layer].append(mat.numpy().astype(np.float32, copy=False))
        return results

    def encode(self, sequences: Sequence[Sequence[str]], layer: int) -> list[np.ndarray]:
        return self.encode_batch(sequences, [layer])[layer]
