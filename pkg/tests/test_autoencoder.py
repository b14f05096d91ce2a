import numpy as np
import pytest

from servo_rl import autoencoder as ae
from servo_rl import nn
from servo_rl.config import RunConfig, substream
from servo_rl.scene import DepthImage, generate_autoencoder_dataset, load_dataset


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("ds") / "d"
    generate_autoencoder_dataset(20, 6, path, seed=21)
    return path


@pytest.fixture(scope="module")
def trained(small_dataset):
    cfg = RunConfig()
    cfg.set("seed", 21)
    cfg.set("ae.epochs", 30)
    cfg.set("ae.hidden1", 128)
    cfg.set("ae.hidden2", 48)
    model, rows = ae.train_autoencoder(small_dataset, cfg)
    return model, rows


def random_model(seed=0, latent=16):
    return ae.build_ae_model(32, 32, latent, 128, 48, 0.05, 1.5, substream(seed, "ae"))


def random_image(seed=0):
    rng = substream(seed, "img")
    return DepthImage(rng.uniform(0.05, 1.5, size=(32, 32)).astype(np.float32))


class TestEncode:
    def test_same_image_same_code(self):
        model = random_model()
        img = random_image()
        assert np.array_equal(ae.encode(model, img), ae.encode(model, img))

    def test_single_pixel_perturbation_is_lipschitz_bounded(self):
        # tanh layers are 1-Lipschitz, so ||dcode|| <= prod ||W||_2 * ||dx||.
        model = random_model()
        img = random_image(1)
        bumped = img.data.copy()
        bumped[7, 9] += 8e-7
        delta_in = abs(model.normalize(bumped)[7, 9]
                       - model.normalize(img.data)[7, 9])
        code_a = ae.encode(model, img)
        code_b = ae.encode(model, DepthImage(bumped))
        bound = delta_in
        for w in model.encoder.weights:
            bound *= np.linalg.norm(w, 2)
        assert np.linalg.norm(code_b - code_a) <= bound + 1e-12

    def test_dimension_mismatch_raises(self):
        model = random_model()
        with pytest.raises(nn.DimensionError):
            ae.encode(model, DepthImage(np.ones((16, 16), dtype=np.float32)))

    def test_latent_must_be_smaller_than_image(self):
        with pytest.raises(ValueError):
            ae.build_ae_model(4, 4, 16, 8, 8, 0.05, 1.5, substream(0, "x"))


class TestReconstruct:
    def test_equals_manual_two_net_forward(self):
        model = random_model(3)
        img = random_image(3)
        _, mse = ae.reconstruct(model, img)
        x = np.asarray(model.normalize(img.data), dtype=np.float64).reshape(1, -1)
        code = nn.forward(model.encoder, x)
        y = nn.forward(model.decoder, code)
        assert mse == float(np.mean((y - x) ** 2))

    def test_hand_computed_2x2_mse(self):
        # Identity-ish nets on a 2x2 image: loss is the plain pixel-mean
        # of squared differences, checked against a by-hand value.
        enc = nn.MlpNet([4, 2], [np.zeros((4, 2))], [np.array([0.3, -0.1])])
        dec = nn.MlpNet([2, 4], [np.zeros((2, 4))], [np.array([0.1, 0.2, 0.3, 0.4])])
        model = ae.AeModel(enc, dec, near=0.0, far=1.0, width=2, height=2)
        img = DepthImage(np.array([[0.1, 0.3], [0.2, 0.6]], dtype=np.float32))
        _, mse = ae.reconstruct(model, img)
        # decoder output is its bias; squared errors computed by hand:
        want = ((0.1 - 0.1) ** 2 + (0.2 - np.float32(0.3)) ** 2
                + (0.3 - np.float32(0.2)) ** 2 + (0.4 - np.float32(0.6)) ** 2) / 4.0
        assert mse == pytest.approx(want, rel=1e-12)

    def test_untrained_worse_than_trained(self, small_dataset, trained):
        model, _ = trained
        images, _ = load_dataset(small_dataset)
        batch = images[:24].reshape(24, -1)
        assert ae.batch_mse(model, batch) < ae.batch_mse(random_model(99), batch)


class TestTraining:
    def test_val_mse_improves(self, trained):
        _, rows = trained
        assert rows[-1]["val_mse"] < rows[0]["val_mse"]

    def test_same_seed_reproduces_parameters(self, small_dataset):
        cfg = RunConfig()
        cfg.set("seed", 33)
        cfg.set("ae.epochs", 4)
        a, _ = ae.train_autoencoder(small_dataset, cfg)
        b, _ = ae.train_autoencoder(small_dataset, cfg)
        for wa, wb in zip(a.encoder.weights + a.decoder.weights,
                          b.encoder.weights + b.decoder.weights):
            assert np.array_equal(wa, wb)

    def test_dataset_too_small_rejected(self, tmp_path):
        generate_autoencoder_dataset(5, 5, tmp_path / "tiny", seed=1)
        with pytest.raises(ValueError):
            ae.train_autoencoder(tmp_path / "tiny", RunConfig())

    def test_checkpoint_round_trip(self, trained, tmp_path):
        model, _ = trained
        ae.save_ae(model, tmp_path / "ck")
        loaded = ae.load_ae(tmp_path / "ck")
        img = random_image(5)
        assert np.array_equal(ae.encode(model, img), ae.encode(loaded, img))
        assert (loaded.near, loaded.far) == (model.near, model.far)

    def test_curve_csv_columns(self, small_dataset, tmp_path):
        cfg = RunConfig()
        cfg.set("ae.epochs", 2)
        ae.train_autoencoder(small_dataset, cfg, tmp_path / "run")
        header = (tmp_path / "run" / "curve.csv").read_text().splitlines()[0]
        assert header == "epoch,train_mse,val_mse,wall_seconds"
