"""Dev-only: batch-size/learning-rate probe (not shipped)."""
import sys, time
import numpy as np
from threadpoolctl import threadpool_limits
from trigan.data import default_mixture_spec, sample_mixture
import trigan.game as game
from trigan.evaluate import histogram2d, jsd_multi

lr = float(sys.argv[1]); m = int(sys.argv[2]); steps = int(sys.argv[3])
seed = int(sys.argv[4]) if len(sys.argv) > 4 else 0
spec = default_mixture_spec()
ds = sample_mixture(spec, 5000, seed=7)
model = game.build_delta_gan(seed=seed, lr=lr)
rng = np.random.default_rng(10_000 + seed)
truth = histogram2d(ds.xy, (-5,5), (-5,5), 64)

def metrics():
    px, py = game.sample_joint_from_generators(model, ds, 20000, np.random.default_rng(5))
    jx = jsd_multi([truth, histogram2d(px, (-5,5), (-5,5), 64)], (0.5,0.5))
    jy = jsd_multi([truth, histogram2d(py, (-5,5), (-5,5), 64)], (0.5,0.5))
    return jx, jy

t0 = time.time()
with threadpool_limits(limits=1):
    for step in range(1, steps + 1):
        batch = game.assemble_batch(ds, m, model.noise_width, rng)
        rep = game.train_step(model, batch)
        if step % 250 == 0:
            jx, jy = metrics()
            print(f"step {step:5d} | Ld {rep.loss_d1:.3f}/{rep.loss_d2:.3f} | jsd {jx:.4f}/{jy:.4f} | {time.time()-t0:.0f}s", flush=True)
