"""Command-line interface: codec, duration, and lab command groups."""

from __future__ import annotations

import json

import click
import numpy as np

from . import duration as du
from . import lab as lb
from .checkpoint import load_checkpoint, save_checkpoint
from .flow import ConditionBundle, FlowConfig


def _write_report(report: dict, path: str):
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    click.echo(f"wrote {path}")


@click.group()
def main():
    """Scalar-latent flow-matching toolkit."""


# -- codec ---------------------------------------------------------------------


@main.group()
def codec():
    """Train and exercise the waveform codec."""


@codec.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def codec_train(config_path: str, out_path: str):
    """Train the codec on synthetic sine mixtures."""
    from . import codec as cd
    from .config import load_codec_config

    cfg, train_cfg = load_codec_config(config_path)
    rng = np.random.default_rng(train_cfg.seed)
    dataset = cd.sine_mixture_dataset(train_cfg.n_clips, rng, cfg.sample_rate)
    _, ckpt = cd.train_codec(dataset, cfg, train_cfg)
    save_checkpoint(ckpt, out_path)
    click.echo(f"final loss {ckpt.meta['final_loss']:.4f}; wrote {out_path}")


@codec.command("roundtrip")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Optionally write the reconstructed WAV here.")
def codec_roundtrip(ckpt_path: str, in_path: str, report_path: str, out_path: str | None):
    """Encode + decode a 16-bit PCM mono WAV and report snr_db/stft_dist."""
    from . import codec as cd

    ckpt = load_checkpoint(ckpt_path)
    codec_model = cd.codec_from_checkpoint(ckpt)
    wav = cd.read_wav(in_path)
    latent, pad = codec_model.encode(wav, return_padding=True)
    recon = codec_model.decode(latent)
    padded_ref = cd.Waveform(np.pad(wav.samples, (0, pad)), wav.sample_rate)
    metrics = cd.recon_metrics(padded_ref, recon)
    if out_path:
        cd.write_wav(out_path, recon)
    _write_report(metrics, report_path)
    click.echo(f"snr_db={metrics['snr_db']:.2f} stft_dist={metrics['stft_dist']:.4f}")


# -- duration ------------------------------------------------------------------


@main.group("duration")
def duration_group():
    """Sentence-duration predictors."""


@duration_group.command("train")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True),
              help='JSON-lines file: {"text": str, "duration_s": float} per line.')
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--steps", default=1500, show_default=True)
@click.option("--lr", default=0.02, show_default=True)
@click.option("--seed", default=0, show_default=True)
def duration_train(data_path: str, out_path: str, steps: int, lr: float, seed: int):
    """Train the regression predictor on duration samples."""
    samples = []
    with open(data_path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            samples.append(du.DurationSample(rec["text"], float(rec["duration_s"])))
    ckpt = du.train_regression_predictor(
        samples, du.DurationTrainConfig(steps=steps, lr=lr, seed=seed))
    save_checkpoint(ckpt, out_path)
    click.echo(f"train mse {ckpt.meta['train_mse']:.5f}, val mse {ckpt.meta['val_mse']:.5f}; wrote {out_path}")


@duration_group.command("predict")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--text", required=True)
@click.option("--fps", default=50, show_default=True, help="Latent frames per second.")
def duration_predict(ckpt_path: str, text: str, fps: int):
    """Print the predicted duration in seconds and latent frames."""
    ckpt = load_checkpoint(ckpt_path)
    seconds = du.predict_duration(text, ckpt)
    frames = du.duration_to_frames(seconds, fps)
    click.echo(f"duration_s={seconds:.3f} frames={frames}")


# -- lab -----------------------------------------------------------------------


@main.group()
def lab():
    """Experiments on the oracle-codec task."""


@lab.command("make-data")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def lab_make_data(config_path: str, out_path: str):
    """Generate a synthetic TTS dataset (.npz)."""
    from .config import load_lab_config

    cfg = load_lab_config(config_path)
    ds = lb.make_tts_dataset(cfg.task, cfg.data.n_utts,
                             len_range=(cfg.data.len_min, cfg.data.len_max), seed=cfg.seed)
    if cfg.data.corrupt_fraction > 0:
        ds = lb.corrupt_labels(ds, cfg.data.corrupt_fraction, cfg.data.corrupt_mode,
                               np.random.default_rng([cfg.seed, 5]))
    lb.save_dataset(ds, out_path)
    click.echo(f"wrote {len(ds.utterances)} utterances to {out_path}")


@lab.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--data", "data_path", type=click.Path(exists=True), default=None,
              help="Use a pre-generated dataset instead of regenerating from the config.")
def lab_train(config_path: str, out_path: str, data_path: str | None):
    """Train the flow velocity model."""
    from .config import load_lab_config

    cfg = load_lab_config(config_path)
    if data_path:
        ds = lb.load_dataset(data_path)
    else:
        ds = lb.make_tts_dataset(cfg.task, cfg.data.n_utts,
                                 len_range=(cfg.data.len_min, cfg.data.len_max), seed=cfg.seed)
        if cfg.data.corrupt_fraction > 0:
            ds = lb.corrupt_labels(ds, cfg.data.corrupt_fraction, cfg.data.corrupt_mode,
                                   np.random.default_rng([cfg.seed, 5]))
    _, ckpt = lb.train_flow_tts(ds, cfg.backbone(), cfg.flow, cfg.optimizer)
    save_checkpoint(ckpt, out_path)
    click.echo(f"loss {ckpt.meta['initial_loss']:.3f} -> {ckpt.meta['final_loss']:.4f}; wrote {out_path}")


@lab.command("eval")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--n-eval", default=32, show_default=True)
@click.option("--gamma", default=None, type=float, help="Override the checkpoint's guidance scale.")
@click.option("--steps", default=None, type=int, help="Override the checkpoint's sampler steps.")
@click.option("--seed", default=0, show_default=True)
def lab_eval(ckpt_path: str, report_path: str, n_eval: int, gamma: float | None,
             steps: int | None, seed: int):
    """Sample held-out conditions and report oracle-decode accuracy."""
    model, task, fcfg = lb.model_from_checkpoint(load_checkpoint(ckpt_path))
    if gamma is not None or steps is not None:
        fcfg = FlowConfig(spec=fcfg.spec, schedule=fcfg.schedule,
                          steps=steps if steps is not None else fcfg.steps,
                          guidance_scale=gamma if gamma is not None else fcfg.guidance_scale,
                          sq_regularize=fcfg.sq_regularize)
    res = lb.eval_conditional(model, task, n_eval, fcfg, seed=seed)
    _write_report(res, report_path)
    click.echo(f"token_accuracy={res['token_accuracy']:.4f}")


@lab.command("cfg-sweep")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--n-eval", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
def lab_cfg_sweep(ckpt_path: str, report_path: str, n_eval: int, seed: int):
    """Token accuracy across guidance scales 1..7."""
    model, task, fcfg = lb.model_from_checkpoint(load_checkpoint(ckpt_path))
    rep = lb.cfg_sweep(model, task, fcfg, n_eval=n_eval, seed=seed)
    _write_report(rep.to_dict(), report_path)


@lab.command("step-sweep")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--n-eval", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
def lab_step_sweep(ckpt_path: str, report_path: str, n_eval: int, seed: int):
    """Accuracy and RTF across Euler step counts."""
    model, task, fcfg = lb.model_from_checkpoint(load_checkpoint(ckpt_path))
    rep = lb.step_sweep(model, task, fcfg, n_eval=n_eval, seed=seed)
    _write_report(rep.to_dict(), report_path)


@lab.command("noisy-label-study")
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--p", default=0.1, show_default=True)
@click.option("--train-steps", default=1200, show_default=True)
@click.option("--n-utts", default=192, show_default=True)
@click.option("--n-eval", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
def lab_noisy_label_study(report_path: str, p: float, train_steps: int, n_utts: int,
                          n_eval: int, seed: int):
    """Twin runs: empty-masked vs shuffle-corrupted conditions."""
    task = lb.OracleCodecTask()
    rep = lb.noisy_label_study(task, p=p, n_utts=n_utts, train_steps=train_steps,
                               n_eval=n_eval, seed=seed)
    _write_report(rep.to_dict(), report_path)


@lab.command("compactness-sweep")
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--codec-steps", default=700, show_default=True)
@click.option("--flow-steps", default=600, show_default=True)
@click.option("--n-eval", default=24, show_default=True)
@click.option("--seed", default=0, show_default=True)
def lab_compactness_sweep(report_path: str, codec_steps: int, flow_steps: int,
                          n_eval: int, seed: int):
    """(S, d) sweep over codec reconstruction and flow generation."""
    rep = lb.compactness_sweep(codec_steps=codec_steps, flow_steps=flow_steps,
                               n_eval=n_eval, seed=seed)
    _write_report(rep.to_dict(), report_path)


@lab.command("rtf")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--frames", default=100, show_default=True, help="Latent frames to generate.")
@click.option("--seed", default=0, show_default=True)
def lab_rtf(ckpt_path: str, report_path: str, frames: int, seed: int):
    """Real-time factor of one guided generation."""
    model, task, fcfg = lb.model_from_checkpoint(load_checkpoint(ckpt_path))
    rng = np.random.default_rng(seed)
    tokens = tuple(int(t) for t in rng.integers(1, task.vocab_size + 1,
                                                size=max(1, frames // task.frames_per_token)))
    cond = ConditionBundle(tokens, np.zeros(lb.STYLE_DIM, dtype=np.float32), frames)
    res = lb.rtf(model, cond, fcfg, frames_per_second=task.frames_per_second, seed=seed)
    _write_report(res, report_path)
    click.echo(f"rtf={res['rtf']:.4f}")


if __name__ == "__main__":
    main()
