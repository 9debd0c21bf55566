"""Dev-only: trajectory of match metrics during training (not shipped)."""
import sys, time
import numpy as np
from threadpoolctl import threadpool_limits

from trigan.data import default_mixture_spec, sample_mixture, split_semi_supervised
import trigan.game as game
from trigan.evaluate import histogram2d, jsd_multi, mmd2

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 6000
lr = float(sys.argv[3]) if len(sys.argv) > 3 else 2e-4
baseline = sys.argv[4] if len(sys.argv) > 4 else "delta-gan"
fraction = float(sys.argv[5]) if len(sys.argv) > 5 else 1.0

spec = default_mixture_spec()
ds = sample_mixture(spec, 5000, seed=7)
if fraction < 1.0:
    ds = split_semi_supervised(ds, fraction, seed=11)

if baseline == "delta-gan":
    model = game.build_delta_gan(seed=seed, lr=lr)
    step_fn = game.train_step
else:
    model = game.build_triple_gan_s(alpha=0.5, seed=seed, lr=lr)
    step_fn = game.triple_gan_s_train_step

rng = np.random.default_rng(seed + 10_000)
eval_rng = np.random.default_rng(999)
truth = histogram2d(ds.xy, (-5, 5), (-5, 5), 64)

def metrics():
    px, py = game.sample_joint_from_generators(model, ds, 20000, np.random.default_rng(5))
    jx = jsd_multi([truth, histogram2d(px, (-5, 5), (-5, 5), 64)], (0.5, 0.5))
    jy = jsd_multi([truth, histogram2d(py, (-5, 5), (-5, 5), 64)], (0.5, 0.5))
    sub = ds.xy[np.random.default_rng(6).choice(len(ds), 5000, replace=False)]
    mx = mmd2(sub, px[:5000]); my = mmd2(sub, py[:5000])
    # pooled mixture of both generators
    pooled = np.concatenate([px[:10000], py[:10000]])
    jp = jsd_multi([truth, histogram2d(pooled, (-5, 5), (-5, 5), 64)], (0.5, 0.5))
    return jx, jy, mx, my, jp

t0 = time.time()
with threadpool_limits(limits=1):
    for step in range(1, steps + 1):
        batch = game.assemble_batch(ds, 128, model.noise_width, rng)
        rep = step_fn(model, batch)
        if step % 500 == 0:
            jx, jy, mx, my, jp = metrics()
            if baseline == "delta-gan":
                print(f"step {step:6d} | Ld {rep.loss_d1:.3f}/{rep.loss_d2:.3f} Lg {rep.loss_g1:.3f}/{rep.loss_g2:.3f} | jsd {jx:.4f}/{jy:.4f} pooled {jp:.4f} | mmd {mx:.5f}/{my:.5f} | {time.time()-t0:.0f}s", flush=True)
            else:
                print(f"step {step:6d} | Ld {rep.loss_d:.3f} Lg {rep.loss_g1:.3f}/{rep.loss_g2:.3f} | jsd {jx:.4f}/{jy:.4f} pooled {jp:.4f} | mmd {mx:.5f}/{my:.5f} | {time.time()-t0:.0f}s", flush=True)
print("done", time.time() - t0)
