"""Dev-only: train briefly, then scatter-plot the learned joints (not shipped)."""
import sys, time
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from threadpoolctl import threadpool_limits

from trigan.data import default_mixture_spec, sample_mixture
import trigan.game as game
from trigan.evaluate import histogram2d, jsd_multi

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
lr = float(sys.argv[2]) if len(sys.argv) > 2 else 1e-3
m = int(sys.argv[3]) if len(sys.argv) > 3 else 128
out = sys.argv[4] if len(sys.argv) > 4 else "/tmp/diag.png"

spec = default_mixture_spec()
ds = sample_mixture(spec, 5000, seed=7)
model = game.build_delta_gan(seed=0, lr=lr)
rng = np.random.default_rng(10_000)
truth = histogram2d(ds.xy, (-5, 5), (-5, 5), 64)

t0 = time.time()
with threadpool_limits(limits=1):
    for step in range(1, steps + 1):
        batch = game.assemble_batch(ds, m, model.noise_width, rng)
        game.train_step(model, batch)

px, py = game.sample_joint_from_generators(model, ds, 20000, np.random.default_rng(5))
jx = jsd_multi([truth, histogram2d(px, (-5, 5), (-5, 5), 64)], (0.5, 0.5))
jy = jsd_multi([truth, histogram2d(py, (-5, 5), (-5, 5), 64)], (0.5, 0.5))

fig, axes = plt.subplots(1, 3, figsize=(15, 5))
for ax, rows, title in [
    (axes[0], ds.xy, "truth"),
    (axes[1], px, f"gen_x joint, jsd={jx:.3f}"),
    (axes[2], py, f"gen_y joint, jsd={jy:.3f}"),
]:
    ax.scatter(rows[:5000, 0], rows[:5000, 1], s=1, alpha=0.3)
    ax.set_xlim(-5, 5); ax.set_ylim(-5, 5); ax.set_title(title)
fig.suptitle(f"steps={steps} lr={lr} M={m} ({time.time()-t0:.0f}s)")
fig.savefig(out, dpi=70)
print(out, f"jsd {jx:.4f}/{jy:.4f}", f"{time.time()-t0:.0f}s")
