"""Evaluation protocols: in-domain, cross-test, fine-tune, pre-training
curves, horizon sweeps, and the sample-and-hold baseline.

A protocol run produces an EvalReport: a complete matrix of
(train domain, test domain) cells, each holding per-repeat NMSE values with
dB-domain mean/std. Cell seeds derive from (master seed, domain, repeat), so
a rerun with the same master seed reproduces every cell; independent cells
can execute in parallel worker processes without changing results.

Cross-tests always evaluate against the target dataset under the *target's*
own normalization (datasets are normalized at build time, before any model
sees them); fine-tuning adapts all layers on a seeded subset of the target
and evaluates on the disjoint remainder.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .datasets import CompressionDataset, PredictionDataset, build_dataset
from .metrics import to_db
from .models import build_model
from .training import TrainConfig, evaluate_model, fine_tune, split_indices, train
from .utils import derive_seed, rng_for

REPORT_SCHEMA_VERSION = 1

TASK_ARCH = {"compression": "csinet_plus", "prediction": "gru_predictor"}


@dataclass
class Domain:
    """One data source taking part in an experiment."""

    name: str
    config: dict  # generator config; must carry 'kind' and 'name'

    def __post_init__(self):
        self.config = dict(self.config)
        self.config.setdefault("name", self.name)


@dataclass
class CellResult:
    values_db: list[float] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    status: str = "ok"  # "ok" | "failed"
    error: str = ""

    @property
    def mean_db(self) -> float:
        return float(np.mean(self.values_db)) if self.values_db else float("nan")

    @property
    def std_db(self) -> float:
        # dB-domain aggregation over repeats (std reported only for repeats > 1)
        return float(np.std(self.values_db, ddof=1)) if len(self.values_db) > 1 else 0.0

    @property
    def repeats(self) -> int:
        return len(self.values_db)


class EvalReport:
    """Cross-test / fine-tune NMSE matrix plus run metadata."""

    def __init__(self, task: str, protocol: str, domains: list[str], master_seed: int,
                 metadata: dict | None = None):
        self.task = task
        self.protocol = protocol
        self.domains = list(domains)
        self.master_seed = master_seed
        self.metadata = metadata or {}
        self.cells: dict[tuple[str, str, str], CellResult] = {}

    def key(self, protocol: str, train_domain: str, test_domain: str):
        return (protocol, train_domain, test_domain)

    def add(self, protocol: str, train_domain: str, test_domain: str, cell: CellResult):
        self.cells[self.key(protocol, train_domain, test_domain)] = cell

    def get(self, protocol: str, train_domain: str, test_domain: str) -> CellResult:
        return self.cells[self.key(protocol, train_domain, test_domain)]

    def validate_complete(self, protocols: list[str]):
        """Missing cells are hard errors: |domains|^2 entries per protocol
        (diagonal entries come from the in-domain protocol)."""
        missing = []
        for proto in protocols:
            for a in self.domains:
                for b in self.domains:
                    if a == b and proto != "in_domain":
                        continue
                    if proto == "in_domain" and a != b:
                        continue
                    if self.key(proto, a, b) not in self.cells:
                        missing.append((proto, a, b))
        if missing:
            raise ValueError(f"report is missing {len(missing)} cells: {missing[:5]}")

    def failed_cells(self):
        return [k for k, c in self.cells.items() if c.status != "ok"]

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": REPORT_SCHEMA_VERSION,
            "task": self.task,
            "protocol": self.protocol,
            "domains": self.domains,
            "master_seed": self.master_seed,
            "metadata": self.metadata,
            "cells": [
                {"protocol": k[0], "train": k[1], "test": k[2], **asdict(c),
                 "mean_db": c.mean_db, "std_db": c.std_db}
                for k, c in sorted(self.cells.items())
            ],
        }

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            doc = json.load(f)
        report = cls(doc["task"], doc["protocol"], doc["domains"], doc["master_seed"],
                     doc.get("metadata", {}))
        for cell in doc["cells"]:
            report.add(cell["protocol"], cell["train"], cell["test"],
                       CellResult(values_db=cell["values_db"], seeds=cell["seeds"],
                                  status=cell["status"], error=cell.get("error", "")))
        return report

    def to_csv(self, path):
        """Matrix layout: rows are training domains; paired column blocks per
        protocol (mirroring the cross-test | fine-tune table structure)."""
        protos = sorted({k[0] for k in self.cells})
        header = ["train_domain"]
        for proto in protos:
            header += [f"{proto}:{d}" for d in self.domains]
        lines = [",".join(header)]
        for a in self.domains:
            row = [a]
            for proto in protos:
                for b in self.domains:
                    cell = self.cells.get(self.key(proto, a, b))
                    if cell is None:
                        row.append("")
                    elif cell.status != "ok":
                        row.append("failed")
                    else:
                        row.append(f"{cell.mean_db:.3f}")
            lines.append(",".join(row))
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Task plumbing

def _xy(dataset, horizon_ms: int | None):
    """(inputs, targets) arrays for either task."""
    if isinstance(dataset, CompressionDataset):
        x = dataset.tensor.astype(np.float32)
        return x, x
    if isinstance(dataset, PredictionDataset):
        if horizon_ms not in dataset.targets:
            raise ValueError(f"horizon {horizon_ms} ms missing from dataset "
                             f"(has {sorted(dataset.targets)})")
        return dataset.inputs.astype(np.float32), dataset.targets[horizon_ms].astype(np.float32)
    raise TypeError(f"unknown dataset type {type(dataset)!r}")


def _task_of(dataset) -> str:
    return "compression" if isinstance(dataset, CompressionDataset) else "prediction"


def train_in_domain(dataset, train_cfg: TrainConfig, horizon_ms: int | None = None):
    """Train one model on a domain's 80/10/10 split.

    Returns (model, result, test NMSE dB on the held-out split).
    """
    task = _task_of(dataset)
    x, t = _xy(dataset, horizon_ms)
    tr, va, te = split_indices(len(x), train_cfg.split, seed=train_cfg.seed)
    if min(len(tr), len(va), len(te)) == 0:
        raise ValueError(f"dataset of {len(x)} samples too small for split {train_cfg.split}")
    rescale = task == "compression"
    model = build_model(TASK_ARCH[task], seed=derive_seed(train_cfg.seed, "init"))
    result = train(model, (x[tr], t[tr]), (x[va], t[va]), train_cfg, rescale=rescale)
    test_db = to_db(evaluate_model(model, x[te], t[te], rescale))
    return model, result, test_db


def cross_test(model, target_dataset, horizon_ms: int | None = None) -> float:
    """Zero-shot NMSE (dB) over 100% of the target dataset, normalized with
    the target dataset's own scheme (applied at build time)."""
    task = _task_of(target_dataset)
    x, t = _xy(target_dataset, horizon_ms)
    return to_db(evaluate_model(model, x, t, rescale=task == "compression"))


def fine_tune_on_target(model, target_dataset, budget: int, cfg: TrainConfig,
                        horizon_ms: int | None = None) -> float:
    """Adapt all layers on `budget` target samples; evaluate on the disjoint
    remainder. Returns NMSE dB."""
    task = _task_of(target_dataset)
    x, t = _xy(target_dataset, horizon_ms)
    if not 0 < budget < len(x):
        raise ValueError(f"budget {budget} out of range for dataset of {len(x)}")
    perm = rng_for(cfg.seed, "finetune-subset").permutation(len(x))
    adapt, rest = perm[:budget], perm[budget:]
    assert len(set(adapt) & set(rest)) == 0
    fine_tune(model, (x[adapt], t[adapt]), cfg, rescale=task == "compression")
    return to_db(evaluate_model(model, x[rest], t[rest], rescale=task == "compression"))


def sample_and_hold(inputs: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, float]:
    """Baseline: predict the last observed channel sample.

    inputs (N, l_in, F), targets (N, F). Returns (predictions, NMSE dB);
    scaling is shared with the learned model's evaluation (single dataset
    scalar), so the ratio is scale-free.
    """
    pred = inputs[:, -1, :]
    ratios = np.sum((targets - pred) ** 2, axis=1) / np.maximum(
        np.sum(targets**2, axis=1), 1e-30)
    return pred, to_db(float(np.mean(ratios)))


# ---------------------------------------------------------------------------
# Matrix protocols

def _cell_payload(task, domains, dataset_size, master_seed, repeats, train_cfg_dict,
                  horizon_ms, budget, params, cache_dir):
    jobs = []
    for domain in domains:
        for rep in range(repeats):
            jobs.append({
                "task": task,
                "train_domain": domain.name,
                "domain_configs": {d.name: d.config for d in domains},
                "dataset_size": dataset_size,
                "master_seed": master_seed,
                "repeat": rep,
                "train_cfg": train_cfg_dict,
                "horizon_ms": horizon_ms,
                "budget": budget,
                "params": params,
                "cache_dir": str(cache_dir) if cache_dir else None,
            })
    return jobs


def _load_domain_dataset(task, name, config, size, master_seed, params, cache_dir):
    return build_dataset(task, config, size, seed=derive_seed(master_seed, "data", name),
                         params=params, cache_dir=cache_dir)


def _run_matrix_cell(job: dict) -> dict:
    """One worker unit: train on (domain, repeat), evaluate everywhere.

    Returns {"train": ..., "repeat": ..., "in_domain": db,
             "cross": {target: db}, "fine_tune": {target: db}} or an error.
    """
    task = job["task"]
    names = list(job["domain_configs"])
    datasets = {
        name: _load_domain_dataset(task, name, cfg, job["dataset_size"],
                                   job["master_seed"], job["params"], job["cache_dir"])
        for name, cfg in job["domain_configs"].items()
    }
    seed = derive_seed(job["master_seed"], "cell", job["train_domain"], job["repeat"])
    cfg = TrainConfig(**{**job["train_cfg"], "seed": seed})
    out = {"train": job["train_domain"], "repeat": job["repeat"], "seed": seed}
    try:
        model, _, test_db = train_in_domain(datasets[job["train_domain"]], cfg,
                                            job["horizon_ms"])
        out["in_domain"] = test_db
        out["cross"], out["fine_tune"] = {}, {}
        for target in names:
            if target == job["train_domain"]:
                continue
            out["cross"][target] = cross_test(model, datasets[target], job["horizon_ms"])
            if job["budget"]:
                adapted = build_model(TASK_ARCH[task], seed=0)
                adapted.load_state_dict(model.state_dict())
                ft_cfg = TrainConfig(**{**job["train_cfg"],
                                        "seed": derive_seed(seed, "ft", target)})
                out["fine_tune"][target] = fine_tune_on_target(
                    adapted, datasets[target], job["budget"], ft_cfg, job["horizon_ms"])
        out["status"] = "ok"
    except Exception as exc:  # cell failures are recorded, the run continues
        out["status"] = "failed"
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def run_matrix(
    task: str,
    domains: list[Domain],
    dataset_size: int,
    train_cfg: TrainConfig,
    master_seed: int,
    repeats: int = 3,
    horizon_ms: int | None = None,
    budget: int | None = None,
    params: dict | None = None,
    cache_dir=None,
    jobs: int = 1,
) -> EvalReport:
    """Full in-domain + cross-test (+ fine-tune when budget given) matrix."""
    cfg_dict = {k: v for k, v in asdict(train_cfg).items() if k != "seed"}
    cfg_dict["split"] = tuple(cfg_dict["split"])
    cells = _cell_payload(task, domains, dataset_size, master_seed, repeats, cfg_dict,
                          horizon_ms, budget, params, cache_dir)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_matrix_cell, cells))
    else:
        results = [_run_matrix_cell(job) for job in cells]

    protocols = ["in_domain", "cross_test"] + (["fine_tune"] if budget else [])
    report = EvalReport(task, "matrix", [d.name for d in domains], master_seed,
                        metadata={
                            "repeats": repeats, "dataset_size": dataset_size,
                            "horizon_ms": horizon_ms, "budget": budget,
                            "train_cfg": cfg_dict, "protocols": protocols,
                        })

    grouped: dict[tuple, CellResult] = {}

    def _append(proto, a, b, value, seed, status="ok", error=""):
        cell = grouped.setdefault((proto, a, b), CellResult())
        if status == "ok":
            cell.values_db.append(value)
            cell.seeds.append(seed)
        else:
            cell.status = "failed"
            cell.error = error

    for res in results:
        a = res["train"]
        if res["status"] != "ok":
            _append("in_domain", a, a, None, None, "failed", res["error"])
            for b in report.domains:
                if b != a:
                    _append("cross_test", a, b, None, None, "failed", res["error"])
                    if budget:
                        _append("fine_tune", a, b, None, None, "failed", res["error"])
            continue
        _append("in_domain", a, a, res["in_domain"], res["seed"])
        for b, v in res["cross"].items():
            _append("cross_test", a, b, v, res["seed"])
        for b, v in res["fine_tune"].items():
            _append("fine_tune", a, b, v, res["seed"])

    for (proto, a, b), cell in grouped.items():
        report.add(proto, a, b, cell)
    report.validate_complete(protocols)
    return report


# ---------------------------------------------------------------------------
# Pre-training curve (budget sweep on one target)

def pretrain_curve(
    task: str,
    source: Domain,
    target: Domain,
    budgets: list[int],
    dataset_size: int,
    train_cfg: TrainConfig,
    finetune_cfg: TrainConfig,
    master_seed: int,
    params: dict | None = None,
    cache_dir=None,
    horizon_ms: int | None = None,
) -> list[dict]:
    """For each ascending budget: train from scratch on that many target
    samples vs fine-tune a source-pretrained model on the same samples;
    both evaluate on the target's held-out test split."""
    if sorted(budgets) != list(budgets):
        raise ValueError("budgets must be ascending")
    src_ds = _load_domain_dataset(task, source.name, source.config, dataset_size,
                                  master_seed, params, cache_dir)
    tgt_ds = _load_domain_dataset(task, target.name, target.config, dataset_size,
                                  master_seed, params, cache_dir)
    x, t = _xy(tgt_ds, horizon_ms)
    seed = derive_seed(master_seed, "curve")
    cfg = TrainConfig(**{**asdict(train_cfg), "seed": seed})
    pre_model, _, _ = train_in_domain(src_ds, cfg, horizon_ms)

    tr, va, te = split_indices(len(x), train_cfg.split, seed=derive_seed(seed, "tgt-split"))
    rescale = task == "compression"
    points = []
    for budget in budgets:
        if budget > len(tr):
            raise ValueError(f"budget {budget} exceeds target training pool {len(tr)}")
        sub = tr[:budget]
        assert len(set(sub) & set(te)) == 0  # adaptation and evaluation disjoint

        scratch_cfg = TrainConfig(**{**asdict(train_cfg),
                                     "seed": derive_seed(seed, "scratch", budget)})
        scratch = build_model(TASK_ARCH[task], seed=derive_seed(scratch_cfg.seed, "init"))
        n_val = max(1, min(len(va), budget // 5))
        train(scratch, (x[sub], t[sub]), (x[va[:n_val]], t[va[:n_val]]), scratch_cfg,
              rescale=rescale)
        scratch_db = to_db(evaluate_model(scratch, x[te], t[te], rescale))

        adapted = build_model(TASK_ARCH[task], seed=0)
        adapted.load_state_dict(pre_model.state_dict())
        ft_cfg = TrainConfig(**{**asdict(finetune_cfg),
                                "seed": derive_seed(seed, "ft", budget)})
        fine_tune(adapted, (x[sub], t[sub]), ft_cfg, rescale=rescale)
        pretrained_db = to_db(evaluate_model(adapted, x[te], t[te], rescale))

        points.append({
            "n_samples": int(budget),
            "nmse_scratch_db": scratch_db,
            "nmse_pretrained_db": pretrained_db,
        })
    return points


# ---------------------------------------------------------------------------
# Horizon sweep (prediction task)

def horizon_sweep(
    domains: list[Domain],
    horizons_ms: list[int],
    dataset_size: int,
    train_cfg: TrainConfig,
    master_seed: int,
    params: dict | None = None,
    cache_dir=None,
) -> list[dict]:
    """One trained model per (domain, horizon) plus the sample-and-hold
    baseline on the same held-out split. Emits rows for plotting."""
    rows = []
    for domain in domains:
        ds = _load_domain_dataset("prediction", domain.name, domain.config, dataset_size,
                                  master_seed, params, cache_dir)
        for h in horizons_ms:
            if h not in ds.targets:
                raise ValueError(f"domain {domain.name} missing horizon {h} ms")
            seed = derive_seed(master_seed, "sweep", domain.name, h)
            cfg = TrainConfig(**{**asdict(train_cfg), "seed": seed})
            model, _, learned_db = train_in_domain(ds, cfg, horizon_ms=h)
            x, t = _xy(ds, h)
            _, _, te = split_indices(len(x), cfg.split, seed=cfg.seed)
            _, sh_db = sample_and_hold(x[te], t[te])
            rows.append({
                "domain": domain.name, "horizon_ms": h,
                "nmse_learned_db": learned_db, "nmse_sh_db": sh_db,
            })
    return rows
