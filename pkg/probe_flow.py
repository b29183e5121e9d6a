"""Scratch probe for flow-TTS calibration (not part of the package)."""
import sys
import time

import numpy as np

from sqflow import lab
from sqflow.flow import FlowConfig


def main(train_steps=2000, n_utts=192, seed=0):
    task = lab.OracleCodecTask()
    ds = lab.make_tts_dataset(task, n_utts, seed=seed)
    ds = lab.corrupt_labels(ds, 0.1, "empty", np.random.default_rng([seed, 5]))
    bcfg = lab.backbone_for_task(task)
    fcfg = FlowConfig(spec=task.spec, steps=25, guidance_scale=5.0)
    t0 = time.perf_counter()
    model, ckpt = lab.train_flow_tts(ds, bcfg, fcfg, lab.FlowTrainConfig(steps=train_steps, seed=seed))
    print(f"train {train_steps}: {time.perf_counter()-t0:.0f}s, loss {ckpt.meta['initial_loss']:.3f}"
          f" -> {ckpt.meta['final_loss']:.4f}", flush=True)
    for g in (0.0, 1.0, 2.0, 3.0, 5.0, 7.0):
        cfg = FlowConfig(spec=task.spec, steps=25, guidance_scale=g)
        res = lab.eval_conditional(model, task, 32, cfg, seed=123)
        print(f"  gamma={g}: token_acc={res['token_accuracy']:.4f} seq_acc={res['sequence_accuracy']:.3f} "
              f"lattice={res['lattice_fraction']:.3f} rtf={res['rtf']:.3f}", flush=True)
    for n in (5, 25, 50):
        cfg = FlowConfig(spec=task.spec, steps=n, guidance_scale=5.0)
        res = lab.eval_conditional(model, task, 32, cfg, seed=123)
        print(f"  steps={n}: token_acc={res['token_accuracy']:.4f} rtf={res['rtf']:.3f}", flush=True)


if __name__ == "__main__":
    steps = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
    n_utts = int(sys.argv[2]) if len(sys.argv) > 2 else 192
    main(steps, n_utts)
