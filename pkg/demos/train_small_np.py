"""Train a small attentive neural process and inspect its attention.

Run with ``python demos/train_small_np.py``.  Uses a few diffuse fields and a
handful of epochs so it finishes in about a minute on one core; the point is
the workflow, not the accuracy.
"""
import numpy as np

from sfrecon import fields as fs
from sfrecon import npmodel as npm
from sfrecon.dataset import DatasetConfig, gen_dataset, read_dataset
from sfrecon.metrics import nmse
from sfrecon.training import TrainConfig, predict_field, train


def main():
    gen_dataset(DatasetConfig(family="diffuse", count=40, freqs=[100.0, 150.0, 200.0], seed=1), "demo_train.sfd")
    data = read_dataset("demo_train.sfd")
    model_cfg = npm.NPConfig(embed_dim=32, latent_dim=32, heads=4, sa_blocks=1, decoder_width=64)
    cfg = TrainConfig(epochs=8, base_lr=1e-3, decayed_lr=1e-4, warmup=2, decay_epoch=6, model=model_cfg)
    params, history = train(data, cfg, seed=0, checkpoint_path="demo.npc")
    for row in history:
        print(f"epoch {row['epoch']}: loss {row['loss']:.4f} (KL {row['KL']:.2e}), lr {row['lr']:.1e}")

    field = fs.gen_diffuse(seed=999, freq_hz=150.0, grid=fs.Grid())
    mags = field.magnitudes.ravel()
    obs = fs.sample_observations(field, 10, seed=0)
    mean, std = mags.mean(), mags.std()
    pred, amap = predict_field(obs.locations, (mags[obs.indices] - mean) / std, field.grid, "demo.npc",
                               stats=(mean, std))
    print(f"held-out field NMSE {nmse(mags, pred.ravel())[1]:.2f} dB")

    # which microphone does the centre of the grid listen to most?
    centre = field.grid.size // 2 + field.grid.ny // 2
    weights = amap.weights[centre]
    dist = np.linalg.norm(obs.locations - field.grid.points()[centre], axis=1)
    for j in np.argsort(-weights)[:3]:
        print(f"context {j}: weight {weights[j]:.3f}, distance {dist[j]:.2f} m")


if __name__ == "__main__":
    main()
