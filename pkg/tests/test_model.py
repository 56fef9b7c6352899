import numpy as np
import pytest

from surrotext import autodiff as ad
from surrotext.autodiff import Tape
from surrotext.model import (Row, Surrogate, SurrogateConfig, checkpoint_hash,
                             fuse_broadcast, load_checkpoint, save_checkpoint,
                             scenario_features)
from surrotext.nn import BiLSTM, ResNetMLP
from surrotext.simulators import generate_weather
from surrotext.tokenizer import build_vocab
from surrotext.validation import ContractViolation

from oracles import check_gradients


def tiny_vocab():
    return build_vocab(["building_type:Warehouse|sqft:4,000",
                        "building_type:Hospital|sqft:9,000"])


def tiny_model(path="syscaps_kv", encoder="bilstm", T=8, n_features=3, seed=0):
    config = SurrogateConfig(attribute_path=path, sequence_encoder=encoder,
                             hidden_size=8, embed_dim=8, top_hidden=8, T=T,
                             token_dim=6, text_hidden=8)
    return Surrogate(config, n_features=n_features, vocab=tiny_vocab(), seed=seed)


def tiny_rows(model, n=3, T=8, seed=0, caption="building_type:Warehouse|sqft:4,000"):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        features = rng.standard_normal((T, model.n_features))
        target = rng.standard_normal(T)
        rows.append(model.make_row(features, caption=caption, target=target,
                                   system_id=f"s{i}"))
    return rows


class TestFuseBroadcast:
    def test_degenerate_T1(self):
        z = ad.tensor(np.ones((1, 4)))
        x = ad.tensor(np.zeros((1, 3)))
        fused = fuse_broadcast(z, x)
        assert fused.shape == (1, 7)

    def test_zero_embedding_passthrough(self):
        z = ad.tensor(np.zeros((1, 4)))
        x = ad.tensor(np.arange(15.0).reshape(5, 3))
        fused = fuse_broadcast(z, x)
        np.testing.assert_array_equal(fused.data[:, :4], np.zeros((5, 4)))
        np.testing.assert_array_equal(fused.data[:, 4:], x.data)

    def test_gradient_wrt_embedding_is_T(self):
        z = ad.parameter(np.random.default_rng(0).standard_normal((1, 4)))
        x = ad.tensor(np.zeros((6, 3)))
        with Tape() as tape:
            ad.backward(ad.tsum(fuse_broadcast(z, x)), tape)
        np.testing.assert_allclose(z.grad, np.full((1, 4), 6.0))


class TestSequenceEncoders:
    def test_resnet_zero_residual_equals_projection(self):
        rng = np.random.default_rng(1)
        res = ResNetMLP(rng, in_dim=5, width=7, blocks=3, name="r")
        x = ad.tensor(rng.standard_normal((4, 5)))
        np.testing.assert_allclose(res(x).data, res.proj(x).data)

    def test_bilstm_reversal_symmetry(self):
        rng = np.random.default_rng(2)
        layer = BiLSTM(rng, in_dim=3, hidden=4, name="a")
        mirrored = BiLSTM(np.random.default_rng(3), in_dim=3, hidden=4, name="b")
        mirrored.fw.w.data = layer.bw.w.data.copy()
        mirrored.fw.b.data = layer.bw.b.data.copy()
        mirrored.bw.w.data = layer.fw.w.data.copy()
        mirrored.bw.b.data = layer.fw.b.data.copy()

        steps = [ad.tensor(np.random.default_rng(10 + t).standard_normal((2, 3)))
                 for t in range(5)]
        out = [e.data for e in layer.run(steps)]
        rev = [e.data for e in mirrored.run(list(reversed(steps)))]
        for t in range(5):
            fw, bw = out[t][:, :4], out[t][:, 4:]
            rfw, rbw = rev[4 - t][:, :4], rev[4 - t][:, 4:]
            np.testing.assert_allclose(fw, rbw, atol=1e-12)
            np.testing.assert_allclose(bw, rfw, atol=1e-12)

    def test_bidirectional_context_flows_backward(self):
        model = tiny_model()
        rows = tiny_rows(model, n=1)
        base = model.forward_rows(rows).data.copy()
        rows[0].features[-1] += 5.0  # perturb the final timestep
        moved = model.forward_rows(rows).data
        first_step = slice(0, 1)  # timestep-major rows: t=0 first
        assert not np.allclose(base[first_step], moved[first_step])

    def test_bilstm_rejects_T1(self):
        model = tiny_model(T=8)
        row = model.make_row(np.zeros((1, 3)),
                             caption="building_type:Warehouse|sqft:4,000")
        with pytest.raises(ContractViolation, match="resnet_mlp"):
            model.forward_rows([row])


class TestPredict:
    def test_no_attribute_path_ignores_captions(self):
        model = tiny_model(path="none")
        rng = np.random.default_rng(0)
        features = rng.standard_normal((8, 3))
        row_a = Row(features=features, system_id="a")
        preds_a = model.predict_rows([row_a])
        # identical weather, no z: predictions cannot depend on any attribute
        row_b = Row(features=features.copy(), system_id="b")
        np.testing.assert_array_equal(preds_a, model.predict_rows([row_b]))

    def test_identical_captions_identical_outputs(self):
        model = tiny_model()
        rows = tiny_rows(model, n=2, seed=4)
        rows[1].features = rows[0].features.copy()
        rows[1].tokens = list(rows[0].tokens)
        preds = model.predict_rows(rows)
        np.testing.assert_array_equal(preds[0], preds[1])

    def test_empty_caption_rejected(self):
        model = tiny_model()
        with pytest.raises(ContractViolation):
            model.make_row(np.zeros((8, 3)), caption="   ")

    def test_untrained_golden_fixture(self):
        model = tiny_model(seed=123)
        features = np.linspace(-1.0, 1.0, 8 * 3).reshape(8, 3)
        row = model.make_row(features, caption="building_type:Warehouse|sqft:4,000")
        value = float(model.predict_rows([row]).sum())
        assert value == pytest.approx(GOLDEN_UNTRAINED_SUM, rel=1e-12)

    def test_top_model_sharing_across_timesteps(self):
        model = tiny_model()
        rows = tiny_rows(model, n=1, seed=6)
        base = model.predict_rows(rows).copy()
        model.head.fc2.b.data = model.head.fc2.b.data + 0.5
        moved = model.predict_rows(rows)
        assert np.all(np.abs(moved - base) > 0)  # every timestep shifted


GOLDEN_UNTRAINED_SUM = -0.05960811645457287


class TestFullModelGradients:
    @pytest.mark.parametrize("path,encoder", [("syscaps_kv", "bilstm"),
                                              ("onehot", "resnet_mlp"),
                                              ("none", "bilstm")])
    def test_gradcheck_random_coordinates(self, path, encoder):
        from surrotext.schema import (AttributeSchema, AttributeSpec,
                                      OneHotAttributeEncoder)
        toy_schema = AttributeSchema(name="toy", specs=(
            AttributeSpec("kind", "categorical", ("x", "y")),
            AttributeSpec("size", "numeric"),
        ))
        enc = OneHotAttributeEncoder(toy_schema).fit(
            [{"kind": "x", "size": 1.0}, {"kind": "y", "size": 3.0}])
        config = SurrogateConfig(attribute_path=path, sequence_encoder=encoder,
                                 hidden_size=8, embed_dim=8, top_hidden=8, T=8,
                                 token_dim=6, text_hidden=8)
        model = Surrogate(config, n_features=3, vocab=tiny_vocab(),
                          onehot_encoder=enc, seed=5)
        rng = np.random.default_rng(11)
        rows = []
        for i in range(2):
            rows.append(model.make_row(
                rng.standard_normal((8, 3)),
                caption="building_type:Warehouse|sqft:4,000",
                attributes={"kind": "x", "size": 2.0},
                target=rng.standard_normal(8), system_id=f"s{i}"))
        target = ad.tensor(model.standardize_targets(rows))

        def forward():
            pred = model.forward_rows(rows)
            return float(np.mean((pred.data - target.data) ** 2))

        params = model.params()
        for p in params.values():
            p.zero_grad()
        with Tape() as tape:
            loss = ad.mse_mean(model.forward_rows(rows), target)
            ad.backward(loss, tape)
        coord_rng = np.random.default_rng(21)
        names = sorted(params)
        for _ in range(10):
            name = names[coord_rng.integers(len(names))]
            p = params[name]
            if p.grad is None:
                continue
            check_gradients(forward, p.data, p.grad, coord_rng, n_coords=2,
                            tol=1e-3)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = tiny_model(seed=9)
        model.y_mean, model.y_std = 4.2, 2.5
        model.training_ranges = {"sqft": (1000.0, 150000.0)}
        rows = tiny_rows(model, n=2, seed=3)
        before = model.predict_rows(rows)

        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, meta={"note": "fixture"})
        loaded = load_checkpoint(path)
        after = loaded.predict_rows([
            loaded.make_row(r.features, caption="building_type:Warehouse|sqft:4,000")
            for r in rows])
        np.testing.assert_array_equal(before, after)
        assert loaded.y_mean == 4.2
        assert loaded.training_ranges["sqft"] == (1000.0, 150000.0)

    def test_hash_stable_and_content_sensitive(self, tmp_path):
        model = tiny_model(seed=9)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, model)
        save_checkpoint(p2, model)
        assert checkpoint_hash(p1) == checkpoint_hash(p2)
        model.head.fc2.b.data = model.head.fc2.b.data + 1.0
        save_checkpoint(p2, model)
        assert checkpoint_hash(p1) != checkpoint_hash(p2)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
        with pytest.raises(ContractViolation):
            load_checkpoint(path)


class TestScenarioFeatures:
    def test_shape_and_finiteness(self):
        weather = generate_weather(0, 168, "mixed")
        feats = scenario_features(weather)
        assert feats.shape == (168, 11)
        assert np.all(np.isfinite(feats))

    def test_calendar_channels_cyclic(self):
        weather = generate_weather(0, 48, "mixed")
        feats = scenario_features(weather)
        hour_sin = feats[:, 7]
        np.testing.assert_allclose(hour_sin[:24], hour_sin[24:48], atol=1e-12)
