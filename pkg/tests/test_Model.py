#!/usr/bin/env python
# pylint: disable=C0103,R0904,W0212
#
# A library that implements the sparse convolutional transformer for
# tissue-block classification on grids of tile embeddings.
# Copyright (C) 2026
# The sctpath developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Lesser Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Lesser Public License for more details.
#
# You should have received a copy of the GNU Lesser Public License
# along with this program.  If not, see [http://www.gnu.org/licenses/].
import unittest

import numpy as np
from scipy.special import expit, softmax

from sctpath import conf
from sctpath import (AbmilConfig, Block, BlockGenerator, DetectionLabel,
                     ModelConfig, StageConfig, SynthConfig, abmil_forward,
                     init_abmil_params, init_sct_params, model_forward_detect,
                     model_forward_grade, param_count, preset)
from sctpath.errors import ConfigError
from sctpath.model import (PRESETS, abmil_forward_full, config_from_vector,
                           config_to_vector, embedding, log_param_count,
                           sct_block_forward, sct_forward, sct_shapes,
                           with_head)


def small_config(in_dim=6, head="detect"):
    stages = [StageConfig(width=8, hidden=12, heads=2),
              StageConfig(width=8, hidden=12, heads=2, pool_mode="avg")]
    return ModelConfig(in_dim=in_dim, stages=stages, head=head).validate()


class TestParams(unittest.TestCase):
    def test_shapes_and_count(self):
        config = small_config()
        params = init_sct_params(config, seed=0)
        expected = sum(int(np.prod(shape))
                       for shape, _ in sct_shapes(config).values())
        self.assertEqual(param_count(params), expected)
        self.assertEqual(params["stages.0.sscsa.W_c"].shape, (8, 9, 8))
        self.assertEqual(params["head.W"].shape, (8, 1))

    def test_seeded_init(self):
        a = init_sct_params(small_config(), seed=4)
        b = init_sct_params(small_config(), seed=4)
        c = init_sct_params(small_config(), seed=5)
        for name in a.names():
            self.assertEqual(a[name].tobytes(), b[name].tobytes())
        self.assertFalse(np.array_equal(a["stages.0.proj.W"],
                                        c["stages.0.proj.W"]))
        self.assertTrue((a["stages.1.norm2.g"] == 1).all())
        self.assertTrue((a["head.b"] == 0).all())

    def test_default_preset_count_is_logged(self):
        params = init_sct_params(preset("default", 64), seed=0)
        with self.assertLogs("sctpath.model", level="INFO") as logs:
            count, ratio = log_param_count(params)
        self.assertEqual(count, param_count(params))
        self.assertAlmostEqual(ratio, count / 1.38e6)
        self.assertIn("1.38M", logs.output[0])

    def test_presets_grow(self):
        counts = [param_count(init_sct_params(preset(name, 16), 0))
                  for name in ("tiny", "small", "default", "large")]
        self.assertEqual(counts, sorted(counts))
        self.assertEqual(set(PRESETS), {"tiny", "small", "default", "large"})

    def test_unknown_preset(self):
        with self.assertRaises(ConfigError):
            preset("huge", 16)

    def test_heads_must_divide_width(self):
        with self.assertRaises(ConfigError):
            ModelConfig(stages=[StageConfig(width=10, heads=4)]).validate()

    def test_empty_model_has_no_parameters(self):
        config = ModelConfig(in_dim=64, stages=[], head=None)
        self.assertEqual(param_count(init_sct_params(config)), 0)

    def test_bias_free_projection(self):
        self.assertEqual(param_count({"proj.W": np.zeros((64, 64))}), 4096)

    def test_config_vector(self):
        config = small_config(head="grade")
        self.assertEqual(config_from_vector(config_to_vector(config)), config)
        abmil = AbmilConfig(in_dim=5, embed_dim=7, attention_dim=3,
                            gated=False)
        self.assertEqual(config_from_vector(config_to_vector(abmil)), abmil)


class TestForward(unittest.TestCase):
    def setUp(self):
        gen = BlockGenerator(SynthConfig(n_blocks=0, dim=6,
                                         tiles_per_slide=(10, 25),
                                         slides_per_block=(1, 3), seed=7))
        self.blocks = [gen.get_block(DetectionLabel(i % 2)) for i in range(6)]
        self.params = init_sct_params(small_config(), seed=1)

    def test_detect_probability(self):
        for block in self.blocks:
            p = model_forward_detect(block, self.params)
            self.assertTrue(0.0 < p < 1.0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        for block in self.blocks:
            base = model_forward_detect(block, self.params)
            for _ in range(10):
                order = rng.permutation(block.n_tiles)
                p = model_forward_detect(block.permuted(order), self.params)
                self.assertLessEqual(abs(p - base), 1e-6 * abs(base))

    def test_single_tile_block(self):
        block = Block("one", np.ones((1, 6)), [[3, 4]], [1],
                      DetectionLabel.BENIGN)
        p = model_forward_detect(block, self.params)
        self.assertTrue(0.0 < p < 1.0)

    def test_grade_distributions(self):
        params = init_sct_params(small_config(head="grade"), seed=2)
        primary, secondary = model_forward_grade(self.blocks[0], params)
        self.assertEqual(primary.shape, (4, ))
        self.assertAlmostEqual(float(primary.sum()), 1.0, places=5)
        self.assertAlmostEqual(float(secondary.sum()), 1.0, places=5)

    def test_head_mismatch(self):
        with self.assertRaises(ConfigError):
            model_forward_grade(self.blocks[0], self.params)

    def test_embedding(self):
        emb = embedding(self.blocks[0], self.params)
        self.assertEqual(emb.shape, (8, ))
        out, _ = sct_forward(self.blocks[0], self.params)
        np.testing.assert_array_equal(out["embedding"], emb)

    def test_block_pools_dense_patch_to_one_token(self):
        config = small_config()
        params = init_sct_params(config, seed=5)
        coords = np.array([[x, y] for y in range(3) for x in range(3)])
        x = np.random.default_rng(1).standard_normal((9, 6)).astype(np.float32)
        out, pooled, _ = sct_block_forward(x, coords, params.stage(0),
                                           config.stages[0])
        self.assertEqual(out.shape, (1, 8))
        self.assertEqual(pooled.tolist(), [[0, 0]])

    def test_block_keeps_isolated_tokens(self):
        config = small_config()
        params = init_sct_params(config, seed=5)
        coords = np.array([[0, 0], [3, 0], [0, 3], [6, 6]])
        x = np.random.default_rng(2).standard_normal((4, 6)).astype(np.float32)
        out, pooled, _ = sct_block_forward(x, coords, params.stage(0),
                                           config.stages[0])
        self.assertEqual(out.shape, (4, 8))
        self.assertEqual(pooled.tolist(), [[0, 0], [1, 0], [0, 1], [2, 2]])

    def test_block_is_deterministic(self):
        config = small_config()
        params = init_sct_params(config, seed=5)
        rng = np.random.default_rng(3)
        cells = rng.choice(36, size=20, replace=False)
        coords = np.column_stack([cells % 6, cells // 6])
        x = rng.standard_normal((20, 6)).astype(np.float32)
        a, ca, _ = sct_block_forward(x, coords, params.stage(0),
                                     config.stages[0])
        b, cb, _ = sct_block_forward(x, coords, params.stage(0),
                                     config.stages[0])
        self.assertEqual(a.tobytes(), b.tobytes())
        np.testing.assert_array_equal(ca, cb)

    def test_zero_detection_head(self):
        params = self.params.copy()
        params["head.W"][:] = 0
        for block in self.blocks:
            self.assertEqual(model_forward_detect(block, params), 0.5)

    def test_zero_grading_heads(self):
        params = init_sct_params(small_config(head="grade"), seed=2)
        for which in ("primary", "secondary"):
            params["head.W_" + which][:] = 0
        for dist in model_forward_grade(self.blocks[1], params):
            np.testing.assert_allclose(dist, np.full(4, 0.25), rtol=1e-6)

    def test_layout_changes_sct_but_not_abmil(self):
        features = np.random.default_rng(4).standard_normal((9, 6)) * 2
        dense = Block("dense", features,
                      [[x, y] for y in range(3) for x in range(3)], [1] * 9)
        spread = Block("spread", features[::-1],
                       [[4 * i, 0] for i in range(9)], [1] * 9)
        self.assertGreater(
            abs(model_forward_detect(dense, self.params) -
                model_forward_detect(spread, self.params)), 1e-6)
        abmil = init_abmil_params(AbmilConfig(in_dim=6, embed_dim=8,
                                              attention_dim=4), seed=1)
        self.assertAlmostEqual(abmil_forward(dense, abmil),
                               abmil_forward(spread, abmil), places=6)

    def test_headless_model(self):
        params = init_sct_params(with_head(small_config(), None), seed=3)
        out, _ = sct_forward(self.blocks[0], params)
        self.assertEqual(set(out), {"embedding"})


class TestAbmil(unittest.TestCase):
    def setUp(self):
        self.params = init_abmil_params(AbmilConfig(in_dim=4, embed_dim=6,
                                                    attention_dim=3), seed=0)
        rng = np.random.default_rng(1)
        self.features = rng.standard_normal((7, 4))

    def test_ignores_coordinates(self):
        a = Block("a", self.features, [[i, 0] for i in range(7)], [1] * 7)
        b = Block("b", self.features, [[0, 2 * i] for i in range(7)], [1] * 7)
        self.assertAlmostEqual(abmil_forward(a, self.params),
                               abmil_forward(b, self.params), places=6)

    def test_single_tile_gets_all_attention(self):
        block = Block("one", self.features[:1], [[2, 5]], [1])
        out, _ = abmil_forward_full(block, self.params)
        self.assertEqual(out["attention"].tolist(), [1.0])

    def test_uniform_scorer_is_mean_pooling(self):
        params = self.params.copy()
        params["attn.w"][:] = 0
        block = Block("a", self.features, [[i, 0] for i in range(7)], [1] * 7)
        out, _ = abmil_forward_full(block, params)
        h = np.maximum(self.features.astype(np.float32) @ params["embed.W"] +
                       params["embed.b"], 0)
        np.testing.assert_allclose(out["attention"], np.full(7, 1 / 7),
                                   rtol=1e-6)
        np.testing.assert_allclose(out["embedding"], h.mean(axis=0),
                                   rtol=1e-5, atol=1e-6)

    def test_matches_weighted_mean_reference(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((10, 4))
        block = Block("ten", x, [[i, 0] for i in range(10)], [1] * 10)
        with conf.precision(np.float64):
            p = init_abmil_params(AbmilConfig(in_dim=4, embed_dim=6,
                                              attention_dim=3), seed=3)
            prob = abmil_forward(block, p)
        x = block.features.astype(np.float64)
        h = np.maximum(x @ p["embed.W"] + p["embed.b"], 0)
        scores = (np.tanh(h @ p["attn.V"] + p["attn.b_V"]) *
                  expit(h @ p["attn.U"] + p["attn.b_U"])) @ p["attn.w"][:, 0]
        alpha = softmax(scores)
        pooled = sum(alpha[i] * h[i] for i in range(10))
        expected = expit(pooled @ p["cls.W"][:, 0] + p["cls.b"][0])
        self.assertLessEqual(abs(prob - expected), 1e-12 * expected)

    def test_attention_sums_to_one(self):
        block = Block("a", self.features, [[i, 0] for i in range(7)], [1] * 7)
        out, _ = abmil_forward_full(block, self.params)
        self.assertEqual(out["attention"].shape, (7, ))
        self.assertAlmostEqual(float(out["attention"].sum()), 1.0, places=5)
        self.assertEqual(out["embedding"].shape, (6, ))


if __name__ == '__main__':
    unittest.main()
