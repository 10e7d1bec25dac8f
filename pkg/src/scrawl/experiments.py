"""Experiment stages: demonstrations, datasets, training, rollouts, reports.

Every stage derives its randomness from the config's master seed and writes
into a fixed layout under the output directory:

    episodes/   recorded demonstrations (training jittered, references not)
    datasets/   padded step-sequence tensors per feature set
    policies/   trained networks with their loss curves
    rollouts/   autonomous writing logs, one file per condition and run
    reports/    metric tables, ink rasters, overlays, bar charts

Stages can run individually as long as their inputs exist; `experiment`
chains all four.  A provenance manifest at the output root records content
hashes and input lineage for every artifact.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import glyphs, manifest, pipeline, report, sim
from .config import ExperimentConfig
from .errors import RolloutError
from .hierarchy import (FeatureSet, UpperReplay, run_autonomous,
                        save_rollout, load_rollout)
from .metrics import aggregate_runs, angular_error, iou, rasterize
from .nn import Policy, TrainHyper, TrainLog, fit, load_policy, save_policy
from .seeding import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Condition:
    kind: str
    feature_set: str
    glyph: str
    feedback: bool

    @property
    def cid(self) -> str:
        fb = "fb" if self.feedback else "nofb"
        return f"{self.kind}-{self.feature_set}-{self.glyph}-{fb}"


def conditions(cfg: ExperimentConfig):
    out = []
    for glyph in cfg.glyphs:
        for kind in cfg.model_kinds:
            for fset in cfg.feature_sets:
                for fb in cfg.feedback_modes:
                    out.append(Condition(kind, fset, glyph, fb))
    return out


class Paths:
    """Canonical artifact locations under one output root."""

    def __init__(self, root):
        self.root = os.path.abspath(root)
        self.episodes = os.path.join(self.root, "episodes")
        self.datasets = os.path.join(self.root, "datasets")
        self.policies = os.path.join(self.root, "policies")
        self.rollouts = os.path.join(self.root, "rollouts")
        self.reports = os.path.join(self.root, "reports")

    def ensure(self):
        for d in (self.root, self.episodes, self.datasets, self.policies,
                  self.rollouts, self.reports):
            os.makedirs(d, exist_ok=True)
        return self

    def demo(self, glyph, i):
        return os.path.join(self.episodes, f"demo_{glyph}_{i:02d}.npz")

    def ref(self, glyph):
        return os.path.join(self.episodes, f"ref_{glyph}.npz")

    def dataset(self, fset):
        return os.path.join(self.datasets, f"dataset_{fset}.npz")

    def dataset_manifest(self, fset):
        return os.path.join(self.datasets, f"dataset_{fset}_manifest.json")

    def policy(self, kind, fset):
        return os.path.join(self.policies, f"policy_{kind}_{fset}.npz")

    def loss_csv(self, kind, fset):
        return os.path.join(self.policies, f"loss_{kind}_{fset}.csv")

    def rollout(self, cid, run):
        return os.path.join(self.rollouts, f"{cid}_run{run}.npz")

    def failures(self):
        return os.path.join(self.rollouts, "failures.json")


def _pmap(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# stage: gen-data


def _demo_worker(args):
    plan, seed, sim_cfg, jitter, path = args
    ep = sim.run_demonstration(plan, seed, sim_cfg, jitter=jitter)
    sim.save_episode(path, ep)
    return path


def stage_gen_data(cfg: ExperimentConfig):
    paths = Paths(cfg.out_dir).ensure()
    ms = cfg.master_seed
    plan = glyphs.glyph_plan(cfg.train_glyph)
    tasks = []
    for i in range(cfg.demo_count):
        tasks.append((plan, derive_seed(ms, "demo", cfg.train_glyph, i),
                      cfg.sim, True, paths.demo(cfg.train_glyph, i)))
    ref_glyphs = sorted(set([cfg.train_glyph] + list(cfg.glyphs)))
    for g in ref_glyphs:
        tasks.append((glyphs.glyph_plan(g), derive_seed(ms, "ref", g),
                      cfg.sim, False, paths.ref(g)))
    log.info("gen-data: recording %d demonstrations", len(tasks))
    _pmap(_demo_worker, tasks, cfg.jobs)

    n_train = cfg.data.train_episodes
    n_val = cfg.data.val_episodes
    demo_paths = [paths.demo(cfg.train_glyph, i) for i in range(cfg.demo_count)]
    train_eps = [sim.load_episode(p) for p in demo_paths[:n_train]]
    val_eps = [sim.load_episode(p) for p in demo_paths[n_train:n_train + n_val]]
    artifacts = [(p, "gen-data", []) for p in demo_paths]
    artifacts += [(paths.ref(g), "gen-data", []) for g in ref_glyphs]
    for fset in cfg.feature_sets:
        fs = FeatureSet.from_label(fset)
        ds = pipeline.build_training_set(
            train_eps, val_eps, slice(0, fs.dim), fset, cfg.data,
            derive_seed(ms, "dataset", fset))
        pipeline.save_dataset(paths.dataset(fset), ds)
        doc = {
            "feature_set": fset,
            "episodes": {
                "train": [os.path.basename(p) for p in demo_paths[:n_train]],
                "val": [os.path.basename(p)
                        for p in demo_paths[n_train:n_train + n_val]],
            },
            "seed": ds.meta["seed"],
            "noise_variance": cfg.data.noise_variance,
            "lpf_cutoff": cfg.data.lpf_cutoff,
            "downsample": cfg.data.downsample,
            "sequences": {"train": int(ds.x_train.shape[0]),
                          "val": int(ds.x_val.shape[0])},
            "padded_length": ds.meta["padded_length"],
            "steps": ds.meta["steps"],
            "input_mean": ds.in_stats.mean.tolist(),
            "input_std": ds.in_stats.std.tolist(),
            "target_mean": ds.out_stats.mean.tolist(),
            "target_std": ds.out_stats.std.tolist(),
        }
        with open(paths.dataset_manifest(fset), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        inputs = demo_paths[:n_train + n_val]
        artifacts.append((paths.dataset(fset), "gen-data", inputs))
        artifacts.append((paths.dataset_manifest(fset), "gen-data", inputs))
    manifest.record(paths.root, artifacts)
    log.info("gen-data: done (%d episodes, %d datasets)",
             len(tasks), len(cfg.feature_sets))
    return paths


# ---------------------------------------------------------------------------
# stage: train


def stage_train(cfg: ExperimentConfig):
    paths = Paths(cfg.out_dir).ensure()
    ms = cfg.master_seed
    artifacts = []
    for kind in cfg.model_kinds:
        for fset in cfg.feature_sets:
            ds = pipeline.load_dataset(paths.dataset(fset))
            hyper = TrainHyper(
                lr=cfg.train.lr, batch_size=cfg.train.batch_size,
                epochs=cfg.train.epochs, beta1=cfg.train.beta1,
                beta2=cfg.train.beta2, eps=cfg.train.eps,
                seed=derive_seed(ms, "train", kind, fset))
            every = max(1, hyper.epochs // 10)

            def progress(epoch, tr, va, _kind=kind, _fset=fset, _ev=every):
                if (epoch + 1) % _ev == 0 or epoch == 0:
                    log.info("train %s/%s epoch %d: train %.3e val %.3e",
                             _kind, _fset, epoch + 1, tr, va)

            params, tlog = fit(ds.x_train, ds.y_train, ds.x_val, ds.y_val,
                               kind, hyper, progress=progress)
            policy = Policy(kind, fset, params, ds.in_stats, ds.out_stats,
                            meta={
                                "train_seed": hyper.seed,
                                "dataset": os.path.basename(paths.dataset(fset)),
                                "epochs": hyper.epochs,
                                "lr": hyper.lr,
                                "batch_size": hyper.batch_size,
                                "final_train_loss": tlog.train_loss[-1],
                                "final_val_loss": tlog.val_loss[-1],
                            })
            save_policy(paths.policy(kind, fset), policy, tlog)
            report.write_loss_csv(paths.loss_csv(kind, fset),
                                  tlog.train_loss, tlog.val_loss)
            artifacts.append((paths.policy(kind, fset), "train",
                              [paths.dataset(fset)]))
            artifacts.append((paths.loss_csv(kind, fset), "train",
                              [paths.dataset(fset)]))
    manifest.record(paths.root, artifacts)
    return paths


# ---------------------------------------------------------------------------
# stage: rollout


def _rollout_worker(args):
    (policy_path, ref_path, sim_cfg, feedback, seed, settings, out_path,
     extra) = args
    try:
        policy = load_policy(policy_path)
        replay = UpperReplay.from_episode(sim.load_episode(ref_path))
        rl = run_autonomous(policy, replay, sim_cfg, feedback, seed, settings)
        rl.meta.update(extra)
        rl.meta["policy_file"] = os.path.basename(policy_path)
        rl.meta["policy_sha256"] = manifest.file_sha256(policy_path)
        rl.meta["replay_file"] = os.path.basename(ref_path)
        save_rollout(out_path, rl)
        return out_path, None
    except (RolloutError, sim.SimulationError) as exc:
        return out_path, str(exc)


def stage_rollout(cfg: ExperimentConfig):
    paths = Paths(cfg.out_dir).ensure()
    ms = cfg.master_seed
    tasks = []
    for cond in conditions(cfg):
        for r in range(cfg.run_count):
            tasks.append((
                paths.policy(cond.kind, cond.feature_set),
                paths.ref(cond.glyph), cfg.sim, cond.feedback,
                derive_seed(ms, "rollout", cond.cid, r), cfg.rollout,
                paths.rollout(cond.cid, r),
                {"condition": cond.cid, "run": r}))
    log.info("rollout: %d runs over %d conditions", len(tasks),
             len(conditions(cfg)))
    results = _pmap(_rollout_worker, tasks, cfg.jobs)
    failures = {os.path.basename(p): err for p, err in results if err}
    with open(paths.failures(), "w") as fh:
        json.dump(failures, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if failures:
        log.warning("rollout: %d of %d runs failed", len(failures), len(tasks))
    artifacts = [(p, "rollout", []) for p, err in results if err is None]
    manifest.record(paths.root, artifacts)
    return paths


# ---------------------------------------------------------------------------
# stage: eval


def stage_eval(cfg: ExperimentConfig):
    paths = Paths(cfg.out_dir).ensure()
    conds = conditions(cfg)
    missing = []
    for cond in conds:
        for r in range(cfg.run_count):
            if not os.path.exists(paths.rollout(cond.cid, r)):
                missing.append(os.path.basename(paths.rollout(cond.cid, r)))
    if missing:
        raise FileNotFoundError(
            f"eval: {len(missing)} rollout logs missing: {missing}")

    res = cfg.eval.resolution
    radius = cfg.eval.stroke_radius_px
    ref_raster = {}
    ref_theta = {}
    artifacts = []
    for g in sorted(set(c.glyph for c in conds)):
        ep = sim.load_episode(paths.ref(g))
        ref_raster[g] = rasterize(ep.ink[:, :2], ep.ink_flag,
                                  resolution=res, radius_px=radius)
        ref_theta[g] = ep.f[::pipeline.NN_PERIOD, :3]
        p = os.path.join(paths.reports, f"ref_{g}.pgm")
        report.write_pgm(p, report.ink_to_gray(ref_raster[g]))
        artifacts.append((p, "eval", [paths.ref(g)]))

    rows = []
    summary_rows = []
    for cond in conds:
        per_iou, per_abs, per_mse = [], [], []
        for r in range(cfg.run_count):
            rl = load_rollout(paths.rollout(cond.cid, r))
            img = rasterize(rl.ink[:, :2], rl.ink_flag,
                            resolution=res, radius_px=radius)
            v_iou = iou(img, ref_raster[cond.glyph])
            v_abs, v_mse = angular_error(ref_theta[cond.glyph],
                                         rl.nn_grid_states[:, :3])
            per_iou.append(v_iou)
            per_abs.append(v_abs)
            per_mse.append(v_mse)
            rows.append({
                "condition": cond.cid, "model": cond.kind,
                "character": cond.glyph, "feedback": cond.feedback,
                "seed": rl.meta["seed"], "iou": v_iou,
                "angular_error_abs": v_abs, "angular_error_mse": v_mse,
            })
            p = os.path.join(paths.reports,
                             f"overlay_{cond.cid}_run{r}.pgm")
            report.write_pgm(p, report.overlay_gray(ref_raster[cond.glyph], img))
            artifacts.append((p, "eval", [paths.rollout(cond.cid, r)]))
        iou_m, iou_s = aggregate_runs(per_iou)
        abs_m, abs_s = aggregate_runs(per_abs)
        mse_m, mse_s = aggregate_runs(per_mse)
        summary_rows.append({
            "condition": cond.cid, "model": cond.kind,
            "character": cond.glyph, "feedback": cond.feedback,
            "runs": cfg.run_count,
            "iou_mean": iou_m, "iou_std": iou_s,
            "angular_error_abs_mean": abs_m, "angular_error_abs_std": abs_s,
            "angular_error_mse_mean": mse_m, "angular_error_mse_std": mse_s,
        })

    metrics_path = os.path.join(paths.reports, "metrics.csv")
    summary_path = os.path.join(paths.reports, "summary.csv")
    report.write_csv(metrics_path, report.METRIC_COLUMNS, rows)
    report.write_csv(summary_path, report.SUMMARY_COLUMNS, summary_rows)
    rollout_inputs = [paths.rollout(c.cid, r) for c in conds
                      for r in range(cfg.run_count)]
    artifacts.append((metrics_path, "eval", rollout_inputs))
    artifacts.append((summary_path, "eval", rollout_inputs))

    labels = [s["condition"] for s in summary_rows]
    iou_svg = os.path.join(paths.reports, "iou.svg")
    ang_svg = os.path.join(paths.reports, "angular_error_abs.svg")
    report.write_bar_svg(iou_svg, "ink overlap (IoU), mean +/- std", labels,
                         [s["iou_mean"] for s in summary_rows],
                         [s["iou_std"] for s in summary_rows])
    report.write_bar_svg(ang_svg, "joint angle error (abs sum), mean +/- std",
                         labels,
                         [s["angular_error_abs_mean"] for s in summary_rows],
                         [s["angular_error_abs_std"] for s in summary_rows],
                         unit="rad")
    artifacts.append((iou_svg, "eval", [summary_path]))
    artifacts.append((ang_svg, "eval", [summary_path]))
    manifest.record(paths.root, artifacts)
    log.info("eval: wrote %d metric rows to %s", len(rows), metrics_path)
    return summary_rows


def run_experiment(cfg: ExperimentConfig):
    stage_gen_data(cfg)
    stage_train(cfg)
    stage_rollout(cfg)
    return stage_eval(cfg)
