import json

import numpy as np
import pytest
import requests
import torch


def post_embed(server, sequences, layer, placeholder="<mask>"):
    return requests.post(
        server.url + "/embed",
        json={"layer": layer, "sequences": sequences, "mask_placeholder": placeholder},
        timeout=60,
    )


class TestHealth:
    def test_reports_model_shape(self, live_server, encoder):
        resp = requests.get(live_server.url + "/health", timeout=10)
        assert resp.status_code == 200
        body = resp.json()
        assert body["num_layers"] == 2
        assert body["dim"] == 32
        assert body["mask_placeholder"] == "<mask>"
        assert "layer_indexing" in body

    def test_unknown_endpoint_is_404(self, live_server):
        assert requests.get(live_server.url + "/nope", timeout=10).status_code == 404


class TestRowConservation:
    @pytest.mark.parametrize("layer", [0, 1, 2])
    def test_fifty_sequences_row_counts(self, live_server, fifty_sequences, layer):
        resp = post_embed(live_server, fifty_sequences, layer)
        assert resp.status_code == 200
        body = resp.json()
        assert body["dim"] == 32
        assert len(body["matrices"]) == 50
        for words, matrix in zip(fifty_sequences, body["matrices"]):
            assert len(matrix) == len(words)
            assert all(len(row) == body["dim"] for row in matrix)

    def test_custom_placeholder_translated(self, live_server):
        via_custom = post_embed(
            live_server, [["they", "[M]", "film"]], 1, placeholder="[M]"
        ).json()["matrices"]
        via_default = post_embed(live_server, [["they", "<mask>", "film"]], 1).json()[
            "matrices"
        ]
        assert np.allclose(via_custom, via_default)


class TestPooling:
    def test_multi_piece_words_are_piece_means(self, live_server, encoder):
        # direct model inspection: run the checkpoint by hand and average
        # the piece vectors of each multi-piece word
        words = ["they", "watched", "a", "unaffable", "film"]
        layer = 2
        served = np.asarray(
            post_embed(live_server, [words], layer).json()["matrices"][0],
            dtype=np.float64,
        )
        tok = encoder.tokenizer
        piece_ids = []
        word_of_piece = []
        for w_idx, word in enumerate(words):
            ids = tok.encode(word, add_special_tokens=False)
            piece_ids.extend(ids)
            word_of_piece.extend([w_idx] * len(ids))
        full = [tok.cls_token_id] + piece_ids + [tok.sep_token_id]
        with torch.no_grad():
            out = encoder.model(
                input_ids=torch.tensor([full]), output_hidden_states=True
            )
        hidden = out.hidden_states[layer][0].numpy()
        lead = 1  # row 0 is [CLS]
        assert tok.tokenize("watched") == ["watch", "##ed"]
        assert tok.tokenize("unaffable") == ["un", "##aff", "##able"]
        for w_idx in range(len(words)):
            rows = [
                hidden[lead + p]
                for p in range(len(piece_ids))
                if word_of_piece[p] == w_idx
            ]
            expected = np.mean(np.asarray(rows, dtype=np.float64), axis=0)
            assert np.max(np.abs(served[w_idx] - expected)) < 1e-6

    def test_single_piece_words_equal_raw_states(self, live_server, encoder):
        words = ["they", "a", "film"]
        served = np.asarray(
            post_embed(live_server, [words], 1).json()["matrices"][0]
        )
        tok = encoder.tokenizer
        ids = (
            [tok.cls_token_id]
            + [tok.convert_tokens_to_ids(w) for w in words]
            + [tok.sep_token_id]
        )
        with torch.no_grad():
            out = encoder.model(
                input_ids=torch.tensor([ids]), output_hidden_states=True
            )
        hidden = out.hidden_states[1][0].numpy()
        assert np.max(np.abs(served - hidden[1:4])) < 1e-6

    def test_mask_is_single_model_mask_token(self, live_server, encoder):
        words = ["they", "<mask>", "film"]
        served = np.asarray(
            post_embed(live_server, [words], 2).json()["matrices"][0]
        )
        assert served.shape == (3, 32)
        tok = encoder.tokenizer
        ids = [
            tok.cls_token_id,
            tok.convert_tokens_to_ids("they"),
            tok.mask_token_id,
            tok.convert_tokens_to_ids("film"),
            tok.sep_token_id,
        ]
        with torch.no_grad():
            out = encoder.model(
                input_ids=torch.tensor([ids]), output_hidden_states=True
            )
        assert np.max(np.abs(served - out.hidden_states[2][0].numpy()[1:4])) < 1e-6


class TestErrors:
    def test_layer_out_of_range_400(self, live_server):
        resp = post_embed(live_server, [["a"]], 9)
        assert resp.status_code == 400
        assert "layer" in resp.json()["error"]

    def test_negative_layer_400(self, live_server):
        assert post_embed(live_server, [["a"]], -1).status_code == 400

    def test_overlong_sequence_413(self, live_server):
        resp = post_embed(live_server, [["watched"] * 60], 1)
        assert resp.status_code == 413

    def test_malformed_body_400(self, live_server):
        resp = requests.post(
            live_server.url + "/embed",
            data=b"not json",
            headers={"Content-Type": "application/json"},
            timeout=10,
        )
        assert resp.status_code == 400

    def test_missing_sequences_400(self, live_server):
        resp = requests.post(live_server.url + "/embed", json={"layer": 1}, timeout=10)
        assert resp.status_code == 400

    def test_empty_sequence_400(self, live_server):
        assert post_embed(live_server, [[]], 1).status_code == 400


class TestDeterminismAndConcurrency:
    def test_identical_requests_identical_responses(self, live_server):
        a = post_embed(live_server, [["they", "watched", "a", "film"]], 1).json()
        b = post_embed(live_server, [["they", "watched", "a", "film"]], 1).json()
        assert a == b

    def test_batching_matches_single_requests(self, live_server, fifty_sequences):
        batch = post_embed(live_server, fifty_sequences[:6], 1).json()["matrices"]
        for words, want in zip(fifty_sequences[:6], batch):
            got = post_embed(live_server, [words], 1).json()["matrices"][0]
            assert np.max(np.abs(np.asarray(got) - np.asarray(want))) < 1e-6

    def test_concurrent_calls_queue_cleanly(self, live_server):
        import concurrent.futures

        def one(i):
            words = ["they", "watched", "a", "film"][: 2 + i % 3]
            return post_embed(live_server, [words], 1).json()["matrices"][0]

        with concurrent.futures.ThreadPoolExecutor(max_workers=6) as pool:
            results = list(pool.map(one, range(12)))
        for i, mat in enumerate(results):
            assert len(mat) == 2 + i % 3
