"""Pipeline orchestration and artifact emission.

Stages communicate only through files in the output directory, so every
stage can be re-run in isolation and the whole pipeline is resumable:

  gen        -> train.csv, test.csv
  train      -> model.json
  mine       -> anchors.csv, sens_grid.csv
  analyze    -> anchor_XXXX.json (+ timing_analyze.csv)
  probe      -> rays_XXXX.csv, triage.csv, pr_*.csv, probe_summary.json
                (+ timing_probe.csv)
  calibrate  -> calibration.csv, probs_*.csv, reliability_*.csv,
                misestimation.csv, calib_params.json
  report     -> report_XXXX.json, stats.csv
  bench      -> bench.csv

Every artifact except the timing files (timing_*.csv, bench.csv, wall-clock
measurements by nature) is byte-deterministic under a fixed master seed.
Per-anchor randomness derives from SeedSequence([master_seed, anchor_id]) so
anchors are reproducible in any execution order.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import calib, ccore, mine, probe, stats, surrogate, synth
from .puiseux import branch_from_dict, branch_summary, branch_to_dict, puiseux_expand

REPORT_SCHEMA_VERSION = 1

DEFAULT_CONFIG: dict[str, object] = {
    "seed": 42,
    "synth.n_per_class": 2000,
    "synth.train_frac": 0.8,
    "synth.sd_phi": 0.3,
    "train.lr": 1e-3,
    "train.epochs": 50,
    "train.batch_size": 64,
    "train.weight_decay": 1e-4,
    "train.hidden_width": 16,
    "mine.tau": 0.0,
    "mine.delta": 0.1,
    "surrogate.degree": 4,
    "surrogate.radius": 0.05,
    "surrogate.n_fit": 600,
    "surrogate.n_eval": 200,
    "surrogate.kink_eps": 1e-6,
    "surrogate.ridge": 1e-8,
    "surrogate.weight_by_distance": True,
    "surrogate.min_keep_ratio": 0.25,
    "surrogate.cond_max": 1e10,
    "puiseux.threshold": 4,
    "kink.n_draws": 2000,
    "probe.n_random": 20,
    "probe.max_radius": 0.02,
    "probe.n_steps": 20,
    "probe.phase_sweep": 8,
    "calib.n_bins": 15,
    "calib.reliability_bins": 10,
    "calib.gamma": 0.5,
    "calib.val_frac": 0.2,
    "report.n_folds": 5,
}

STAGE_ORDER = ["gen", "train", "mine", "analyze", "probe", "calibrate", "report"]


class StageInputError(RuntimeError):
    """A prerequisite artifact is missing; the message names the stage to run."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def load_config(path=None, overrides=None) -> dict:
    """Flat key = value config; unknown keys are rejected loudly."""
    cfg = dict(DEFAULT_CONFIG)
    if path is not None:
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = line.split("=", 1)
            key = key.strip()
            if key not in cfg:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            cfg[key] = _parse_value(raw)
    for key, raw in (overrides or {}).items():
        if key not in cfg:
            raise ValueError(f"unknown config key {key!r}")
        cfg[key] = _parse_value(raw) if isinstance(raw, str) else raw
    return cfg


def write_config(cfg: dict, path) -> None:
    lines = [f"{k} = {cfg[k]}" for k in sorted(cfg)]
    Path(path).write_text("\n".join(lines) + "\n")


def _anchor_seed(master_seed: int, anchor_id: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, anchor_id, stream]))


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise StageInputError(f"missing {path.name}; run the '{producer}' stage first")
    return path


def _dump_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_gen(cfg: dict, out: Path) -> None:
    p = synth.HelixParams(
        sd_phi=cfg["synth.sd_phi"], n_per_class=cfg["synth.n_per_class"],
        seed=cfg["seed"], train_frac=cfg["synth.train_frac"])
    X_train, y_train, X_test, y_test = synth.generate(p)
    synth.write_csv(out / "train.csv", X_train, y_train)
    synth.write_csv(out / "test.csv", X_test, y_test)


def stage_train(cfg: dict, out: Path) -> None:
    X, y = synth.read_csv(_require(out / "train.csv", "gen"))
    tc = ccore.TrainConfig(
        lr=cfg["train.lr"], epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"], weight_decay=cfg["train.weight_decay"],
        hidden_width=cfg["train.hidden_width"], seed=cfg["seed"])
    params = ccore.train((X, y), tc)
    ccore.save_checkpoint(params, out / "model.json", seed=cfg["seed"])


def stage_mine(cfg: dict, out: Path) -> None:
    params, _ = ccore.load_checkpoint(_require(out / "model.json", "train"))
    X, y = synth.read_csv(_require(out / "test.csv", "gen"))
    probs = ccore.predict_proba(params, X)
    records = mine.flag_uncertain(probs, cfg["mine.tau"], cfg["mine.delta"],
                                  X=X, y_true=y)
    mine.write_anchor_csv(out / "anchors.csv", records)
    preds = probs.argmax(axis=1)
    cells = mine.sensitivity_grid(probs, y, preds, X)
    mine.write_sensitivity_csv(out / "sens_grid.csv", cells)


def _surrogate_config(cfg: dict) -> surrogate.SurrogateConfig:
    return surrogate.SurrogateConfig(
        degree=cfg["surrogate.degree"], radius=cfg["surrogate.radius"],
        n_fit=cfg["surrogate.n_fit"], n_eval=cfg["surrogate.n_eval"],
        kink_eps=cfg["surrogate.kink_eps"], ridge=cfg["surrogate.ridge"],
        weight_by_distance=cfg["surrogate.weight_by_distance"],
        min_keep_ratio=cfg["surrogate.min_keep_ratio"],
        cond_max=cfg["surrogate.cond_max"], seed=cfg["seed"])


def _config_echo(cfg: dict) -> dict:
    keys = [k for k in cfg if k.split(".")[0] in ("surrogate", "puiseux", "kink")]
    return {k: cfg[k] for k in sorted(keys)}


def _fit_to_json(fit: surrogate.SurrogateFit) -> dict:
    doc = {
        "degree_used": fit.degree_used,
        "radius_used": fit.radius_used,
        "cond_A": fit.cond_A if math.isfinite(fit.cond_A) else None,
        "rank_A": fit.rank_A,
        "kept_ratio": fit.kept_ratio,
        "coefficients": [{"i": i, "j": j, "re": c.real, "im": c.imag}
                         for (i, j), c in sorted(fit.coeffs.items())],
    }
    if fit.fidelity is not None:
        f = fit.fidelity
        doc["fidelity"] = {
            "rmse": f.rmse if math.isfinite(f.rmse) else None,
            "mae": f.mae if math.isfinite(f.mae) else None,
            "pearson": f.pearson if math.isfinite(f.pearson) else None,
            "sign_agreement": f.sign_agreement if math.isfinite(f.sign_agreement) else None,
            "available": f.available,
        }
    return doc


def _fit_from_json(doc: dict) -> surrogate.SurrogateFit:
    coeffs = {(int(r["i"]), int(r["j"])): complex(r["re"], r["im"])
              for r in doc["coefficients"]}
    return surrogate.SurrogateFit(
        coeffs=coeffs, degree_used=doc["degree_used"], radius_used=doc["radius_used"],
        cond_A=doc["cond_A"] if doc["cond_A"] is not None else float("inf"),
        rank_A=doc["rank_A"], kept_ratio=doc["kept_ratio"])


def stage_analyze(cfg: dict, out: Path) -> None:
    """Fit the local surrogate and expand its branches for every anchor.

    A failure on one anchor is recorded in that anchor's JSON and the run
    continues with the rest.
    """
    params, _ = ccore.load_checkpoint(_require(out / "model.json", "train"))
    records = mine.read_anchor_csv(_require(out / "anchors.csv", "mine"))
    scfg = _surrogate_config(cfg)
    threshold = Fraction(str(cfg["puiseux.threshold"]))
    echo = _config_echo(cfg)

    timing_rows = []
    for rec in records:
        doc = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "anchor_id": rec.id,
            "x": [float(v) for v in rec.x],
            "y_true": rec.y_true,
            "probs": [float(v) for v in rec.probs],
            "p_max": rec.p_max,
            "margin": rec.margin,
            "flag_reason": rec.flag_reason,
            "config": echo,
        }
        t_start = time.perf_counter()
        timings = {"sampling": 0.0, "lstsq": 0.0}
        try:
            rng = _anchor_seed(cfg["seed"], rec.id, 0)
            fit = surrogate.fit_anchor_surrogate(params, rec.x, scfg, rng=rng,
                                                 timings=timings)
            fit.fidelity = surrogate.evaluate_fidelity(
                fit, params, rec.x, scfg, rng=_anchor_seed(cfg["seed"], rec.id, 1))
            kink_score, kink_degenerate = surrogate.kink_prevalence(
                params, rec.x, n_draws=cfg["kink.n_draws"], radius=scfg.radius,
                rng=_anchor_seed(cfg["seed"], rec.id, 2))
            t_expand = time.perf_counter()
            branches = puiseux_expand(fit.to_poly(), threshold=threshold)
            expand_s = time.perf_counter() - t_expand
            summary = branch_summary(branches)
            dr, r_dom = probe.dominant_ratio(fit)
            doc.update({
                "status": "ok",
                "fit": _fit_to_json(fit),
                "kink_score": kink_score,
                "kink_degenerate": kink_degenerate,
                "branches": [branch_to_dict(b) for b in branches],
                "num_branches": summary.num_branches,
                "m": summary.total_multiplicity,
                "dominant_ratio": dr if math.isfinite(dr) else None,
                "r_dom": r_dom if math.isfinite(r_dom) else None,
                "abs_c4": probe.max_quartic_magnitude(fit),
            })
        except Exception as exc:  # isolate per-anchor failures
            expand_s = 0.0
            doc.update({"status": "failed", "error": f"{type(exc).__name__}: {exc}"})
        total_s = time.perf_counter() - t_start
        _dump_json(doc, out / f"anchor_{rec.id:04d}.json")
        timing_rows.append([rec.id, timings["sampling"] * 1e3, timings["lstsq"] * 1e3,
                            expand_s * 1e3, total_s * 1e3])

    with open(out / "timing_analyze.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["anchor_id", "sampling_ms", "lstsq_ms", "expand_ms", "analyze_total_ms"])
        w.writerows(timing_rows)


def _iter_anchor_docs(out: Path):
    for path in sorted(out.glob("anchor_*.json")):
        with open(path) as fh:
            yield json.load(fh)


def stage_probe(cfg: dict, out: Path) -> None:
    params, _ = ccore.load_checkpoint(_require(out / "model.json", "train"))
    _require(out / "anchors.csv", "mine")
    docs = list(_iter_anchor_docs(out))
    if not docs:
        raise StageInputError("no anchor_*.json found; run the 'analyze' stage first")

    triage_rows = []
    timing_rows = []
    flips, rdoms = [], []
    for doc in docs:
        if doc["status"] != "ok":
            continue
        aid = doc["anchor_id"]
        x = np.array(doc["x"], dtype=float)
        branches = [branch_from_dict(b) for b in doc["branches"]]
        seed = int(np.random.SeedSequence([cfg["seed"], aid, 3]).generate_state(1)[0])

        grad, grad_norm, saliency_s = probe.gradient_saliency(params, x)
        t0 = time.perf_counter()
        probes = probe.probe_anchor(
            params, x, branches, n_random=cfg["probe.n_random"], seed=seed,
            max_radius=cfg["probe.max_radius"], n_steps=cfg["probe.n_steps"],
            phase_sweep=cfg["probe.phase_sweep"])
        probe_s = time.perf_counter() - t0
        probe.write_ray_csv(out / f"rays_{aid:04d}.csv", probes)

        r_min = probe.min_flip_radius(probes)
        r_grad = probe.min_flip_radius(probes, source=probe.SOURCE_GRADIENT)
        r_dom = doc["r_dom"] if doc["r_dom"] is not None else float("inf")
        triage_rows.append(probe.TriageRow(
            anchor_id=aid, abs_c4=doc["abs_c4"], grad_norm=grad_norm,
            inv_r_grad=0.0 if r_grad is None else 1.0 / r_grad,
            r_dom=r_dom, fragile=r_min is not None))
        timing_rows.append([aid, probe_s * 1e3, saliency_s * 1e3])
        if r_min is not None and doc["r_dom"] is not None:
            flips.append(r_min)
            rdoms.append(doc["r_dom"])

    probe.write_triage_csv(out / "triage.csv", triage_rows)
    auprc_rows = []
    for score in probe.TRIAGE_SCORES:
        points, auprc, degenerate = probe.triage(triage_rows, score)
        probe.write_pr_csv(out / f"pr_{score}.csv", points)
        auprc_rows.append([score, repr(auprc), int(degenerate)])
    with open(out / "triage_auprc.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["score", "auprc", "degenerate"])
        w.writerows(auprc_rows)

    corr = None
    if len(flips) >= 2 and np.std(flips) > 0 and np.std(rdoms) > 0:
        corr = float(np.corrcoef(rdoms, flips)[0, 1])
    fragile_count = sum(1 for r in triage_rows if r.fragile)
    _dump_json({
        "schema_version": REPORT_SCHEMA_VERSION,
        "n_anchors_probed": len(triage_rows),
        "n_fragile": fragile_count,
        "mean_min_flip_radius": (float(np.mean(flips)) if flips else None),
        "pearson_rdom_vs_rflip": corr,
    }, out / "probe_summary.json")

    with open(out / "timing_probe.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["anchor_id", "probe_ms", "saliency_ms"])
        w.writerows(timing_rows)


def _anchor_multiplicities(out: Path) -> dict[int, int]:
    return {doc["anchor_id"]: doc["m"] for doc in _iter_anchor_docs(out)
            if doc["status"] == "ok" and doc.get("m", 0) >= 1}


def _write_probs_csv(path, probs: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "p0", "p1"])
        for i, row in enumerate(probs):
            w.writerow([i, repr(float(row[0])), repr(float(row[1]))])


def read_probs_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            rows.append([float(row[1]), float(row[2])])
    return np.array(rows)


def stage_calibrate(cfg: dict, out: Path) -> None:
    """Fit post-hoc calibrators on a validation carve-out and score the test set.

    The validation split is the trailing fraction of the (already shuffled)
    training file.  Scores for Platt/isotonic are oriented as l1 - l0 so the
    fitted slope is nonnegative for a sane model.  The phase-aware method
    applies T'(m) at analyzed anchors and T_base elsewhere.
    """
    params, _ = ccore.load_checkpoint(_require(out / "model.json", "train"))
    X_train, y_train = synth.read_csv(_require(out / "train.csv", "gen"))
    X_test, y_test = synth.read_csv(_require(out / "test.csv", "gen"))
    _require(out / "anchors.csv", "mine")

    n_val = max(2, int(round(cfg["calib.val_frac"] * len(y_train))))
    X_val, y_val = X_train[-n_val:], y_train[-n_val:]
    val_logits, _ = ccore.forward(params, X_val)
    test_logits, _ = ccore.forward(params, X_test)

    T = calib.fit_temperature(val_logits, y_val)
    a, b = calib.fit_platt(val_logits[:, 1] - val_logits[:, 0], y_val)
    iso = calib.fit_isotonic(val_logits[:, 1] - val_logits[:, 0], y_val)

    m_by_anchor = _anchor_multiplicities(out)
    gamma = cfg["calib.gamma"]
    phase_T = np.full(len(y_test), T)
    for aid, m in m_by_anchor.items():
        phase_T[aid] = calib.phase_aware_T(T, m, gamma)
    phase_probs = np.vstack([
        calib.softmax_temp(test_logits[i], phase_T[i]) for i in range(len(y_test))])

    test_scores = test_logits[:, 1] - test_logits[:, 0]
    method_probs = {
        "none": calib.softmax_temp(test_logits, 1.0),
        "temperature": calib.softmax_temp(test_logits, T),
        "platt": calib.apply_platt(test_scores, a, b),
        "isotonic": iso.probs(test_scores),
        "phase_aware": phase_probs,
    }

    n_bins = cfg["calib.n_bins"]
    fitted = {
        "none": {},
        "temperature": {"T": T},
        "platt": {"a": a, "b": b},
        "isotonic": {"n_blocks": len(iso.values)},
        "phase_aware": {"T_base": T, "gamma": gamma,
                        "n_anchors": len(m_by_anchor)},
    }
    reports = []
    for method, probs in method_probs.items():
        e, nll, brier = calib.evaluate_probs(probs, y_test, n_bins=n_bins)
        reports.append(calib.CalibReport(method=method, ece=e, nll=nll,
                                         brier=brier, n_bins=n_bins,
                                         fitted_params=fitted[method]))
        _write_probs_csv(out / f"probs_{method}.csv", probs)
        conf = probs.max(axis=1)
        correct = probs.argmax(axis=1) == y_test
        calib.write_reliability_csv(
            out / f"reliability_{method}.csv",
            calib.reliability_curve(conf, correct, n_bins=cfg["calib.reliability_bins"]))
    calib.write_calibration_csv(out / "calibration.csv", reports)

    with open(out / "misestimation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "t_mult"])
        for eps, tm in calib.misestimation_sweep(gamma=gamma):
            w.writerow([repr(eps), repr(tm)])

    ece_none = reports[0].ece
    _dump_json({
        "schema_version": REPORT_SCHEMA_VERSION,
        "temperature": T,
        "platt_a": a,
        "platt_b": b,
        "gamma": gamma,
        "anchor_multiplicities": {str(k): v for k, v in sorted(m_by_anchor.items())},
        "rel_drop_vs_none": {r.method: calib.rel_drop(ece_none, r.ece)
                             for r in reports if r.method != "none"},
    }, out / "calib_params.json")


def _read_rays(path: Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            rows.append({
                "direction_source": row[0],
                "direction": [float(v) for v in row[1:5]],
                "flip_radius": float(row[5]) if row[5] else None,
            })
    return rows


def stage_report(cfg: dict, out: Path) -> None:
    """Merge per-anchor artifacts and compute fold-wise method statistics."""
    _require(out / "calibration.csv", "calibrate")
    X_test, y_test = synth.read_csv(_require(out / "test.csv", "gen"))

    for doc in _iter_anchor_docs(out):
        aid = doc["anchor_id"]
        rays_path = out / f"rays_{aid:04d}.csv"
        doc["rays"] = _read_rays(rays_path) if rays_path.exists() else []
        flips = [r["flip_radius"] for r in doc["rays"] if r["flip_radius"] is not None]
        doc["min_flip_radius"] = min(flips) if flips else None
        _dump_json(doc, out / f"report_{aid:04d}.json")

    # fold-wise metrics: stratified folds of the test split, one rng stream
    n_folds = cfg["report.n_folds"]
    rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], 777]))
    fold_of = np.empty(len(y_test), dtype=int)
    for cls in np.unique(y_test):
        idx = np.flatnonzero(y_test == cls)
        idx = rng.permutation(idx)
        for k, i in enumerate(idx):
            fold_of[i] = k % n_folds

    methods = ["none", "temperature", "platt", "isotonic", "phase_aware"]
    per_fold: dict[str, dict[str, list[float]]] = {}
    n_bins = cfg["calib.n_bins"]
    for method in methods:
        probs = read_probs_csv(_require(out / f"probs_{method}.csv", "calibrate"))
        metrics = {"ece": [], "nll": [], "brier": [], "acc": []}
        for k in range(n_folds):
            mask = fold_of == k
            e, nll, brier = calib.evaluate_probs(probs[mask], y_test[mask],
                                                 n_bins=n_bins)
            metrics["ece"].append(e)
            metrics["nll"].append(nll)
            metrics["brier"].append(brier)
            metrics["acc"].append(float(np.mean(probs[mask].argmax(axis=1) == y_test[mask])))
        per_fold[method] = metrics

    rows = stats.summarize_methods(per_fold, baseline="none",
                                   lower_better=("ece", "nll", "brier"))
    stats.write_stats_csv(out / "stats.csv", rows)


def stage_bench(cfg: dict, out: Path) -> None:
    """Median [IQR] per-stage timings and the expansion-vs-saliency ratio."""
    analyze_path = _require(out / "timing_analyze.csv", "analyze")
    probe_path = _require(out / "timing_probe.csv", "probe")

    def _read_timing(path):
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            cols = {h: [] for h in header[1:]}
            ids = []
            for row in r:
                ids.append(int(row[0]))
                for h, v in zip(header[1:], row[1:]):
                    cols[h].append(float(v))
        return ids, cols

    ids_a, cols_a = _read_timing(analyze_path)
    ids_p, cols_p = _read_timing(probe_path)
    probe_by_id = dict(zip(ids_p, cols_p["probe_ms"]))
    saliency_by_id = dict(zip(ids_p, cols_p["saliency_ms"]))

    stages = {
        "sampling": cols_a["sampling_ms"],
        "lstsq": cols_a["lstsq_ms"],
        "expand": cols_a["expand_ms"],
        "probe": [probe_by_id.get(i, 0.0) for i in ids_a],
        "total": [t + probe_by_id.get(i, 0.0)
                  for i, t in zip(ids_a, cols_a["analyze_total_ms"])],
        "saliency": [saliency_by_id.get(i, 0.0) for i in ids_a],
    }
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "median_ms", "iqr_low_ms", "iqr_high_ms"])
        for name, vals in stages.items():
            v = np.asarray(vals)
            w.writerow([name, repr(float(np.median(v))),
                        repr(float(np.percentile(v, 25))),
                        repr(float(np.percentile(v, 75)))])
        med_total = float(np.median(stages["total"]))
        med_sal = float(np.median(stages["saliency"]))
        ratio = med_total / med_sal if med_sal > 0 else float("nan")
        w.writerow(["ratio_total_over_saliency", repr(ratio), "", ""])


STAGES = {
    "gen": stage_gen,
    "train": stage_train,
    "mine": stage_mine,
    "analyze": stage_analyze,
    "probe": stage_probe,
    "calibrate": stage_calibrate,
    "report": stage_report,
    "bench": stage_bench,
}


def run_pipeline(cfg: dict, out: Path) -> None:
    """Run every stage in order (bench last, after the timing files exist)."""
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.txt")
    for name in STAGE_ORDER:
        STAGES[name](cfg, out)
    stage_bench(cfg, out)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cxlens",
        description="Decision-boundary branch analysis and calibration "
                    "pipeline for the synthetic complex-pair benchmark.")
    parser.add_argument("stage", choices=["run", *STAGES.keys()],
                        help="pipeline stage to execute ('run' does everything)")
    parser.add_argument("--config", type=Path, default=None,
                        help="flat key = value config file")
    parser.add_argument("--out-dir", type=Path, default=Path("runs/default"))
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (overrides the config)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a single config key (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        cfg = load_config(args.config, overrides)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.out_dir
    try:
        if args.stage == "run":
            run_pipeline(cfg, out)
        else:
            out.mkdir(parents=True, exist_ok=True)
            STAGES[args.stage](cfg, out)
    except StageInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
