"""Configuration-driven experiment runner.

A single JSON config describes geometry, codebooks, the simulation
protocol, the train/test split, the algorithm roster, and the metric
thresholds.  Stages (codebook -> dataset -> train -> eval -> sweep ->
figure) each persist artifacts under the output directory and can be
re-run individually; everything is reproducible from the config alone.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from beamsense import arrays, channel, metrics, nn, sparse
from beamsense.arrays import ArrayGeometry, Codebook, QpdParams, SaParams


class ConfigError(ValueError):
    """Invalid or unknown config fields; maps to exit code 2."""


class MissingArtifactError(RuntimeError):
    """An upstream stage has not produced its artifact yet; exit code 3."""


SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version", "geometry", "directional", "sensing", "protocol",
    "split", "algorithms", "metric", "out_dir",
}


def _check_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {sorted(unknown)}")


def load_config(path) -> dict:
    try:
        with open(path) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict):
    _check_keys(cfg, _TOP_KEYS, "config")
    missing = _TOP_KEYS - {"out_dir"} - set(cfg)
    if missing:
        raise ConfigError(f"missing required field(s): {sorted(missing)}")
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg['schema_version']}")
    _check_keys(cfg["geometry"], {"n_elements", "element_spacing"}, "geometry")
    _check_keys(cfg["directional"], {"n_beams", "span_deg"}, "directional")
    _check_keys(cfg["sensing"], {"pools", "mix", "m_values"}, "sensing")
    for name, pool in cfg["sensing"]["pools"].items():
        kind = pool.get("type")
        allowed = {
            "pn": {"type", "n_beams", "seed"},
            "sa": {"type", "n_subarrays", "finger_separation_deg", "n_beams",
                   "center_spacing_deg"},
            "qpd": {"type", "phi_max", "n_beams", "center_spacing_deg"},
            "pencil": {"type", "n_beams", "span_deg"},
        }.get(kind)
        if allowed is None:
            raise ConfigError(f"sensing pool {name!r}: unknown type {kind!r}")
        _check_keys(pool, allowed, f"sensing.pools.{name}")
    mix = cfg["sensing"]["mix"]
    if sum(1 for v in mix.values() if v is None) != 1:
        raise ConfigError("sensing.mix must have exactly one null (filler) entry")
    for k in mix:
        if k not in cfg["sensing"]["pools"]:
            raise ConfigError(f"sensing.mix references unknown pool {k!r}")
    _check_keys(
        cfg["protocol"],
        {"alphas", "n_paths", "n_angle_draws", "n_noise_reps", "master_seed",
         "snr_db", "angle_limit_deg", "offset_min_deg", "offset_max_deg",
         "min_separation_deg"},
        "protocol",
    )
    _check_keys(cfg["split"], {"train_per_label", "split_seed"}, "split")
    known_algs = {"exhaustive", "rss_mp", "phaseless_l1", "mlp", "cnn"}
    for a in cfg["algorithms"]:
        if a.get("name") not in known_algs:
            raise ConfigError(f"unknown algorithm {a.get('name')!r}")
        allowed = {
            "exhaustive": {"name"},
            "rss_mp": {"name", "codebook", "n_iters"},
            "phaseless_l1": {"name", "codebook", "gamma", "max_iters", "tol"},
            "mlp": {"name", "hidden", "learning_rate", "decay_rho",
                    "epsilon_stab", "batch_size", "epochs", "seed"},
            "cnn": {"name", "conv_layers", "hidden", "learning_rate",
                    "decay_rho", "epsilon_stab", "batch_size", "epochs", "seed"},
        }[a["name"]]
        _check_keys(a, allowed, f"algorithms[{a['name']}]")
    _check_keys(cfg["metric"], {"threshold_db", "percentile"}, "metric")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# stage: codebooks

def build_geometry(cfg) -> ArrayGeometry:
    g = cfg["geometry"]
    return ArrayGeometry(g["n_elements"], g.get("element_spacing", 0.5))


def _even_centers(n_beams: int, spacing: float) -> np.ndarray:
    # grid of evenly spaced beam centers, centered on broadside
    return (np.arange(n_beams) - (n_beams - 1) / 2) * spacing


def build_directional(cfg) -> Codebook:
    geom = build_geometry(cfg)
    d = cfg["directional"]
    lo, hi = d["span_deg"]
    return arrays.pencil_codebook(geom, np.linspace(lo, hi, d["n_beams"]))


def build_pool(cfg, pool: dict) -> Codebook:
    geom = build_geometry(cfg)
    kind = pool["type"]
    if kind == "pn":
        return arrays.pn_codebook(geom, pool["n_beams"], pool["seed"])
    if kind == "sa":
        params = SaParams(pool["n_subarrays"], pool["finger_separation_deg"])
        centers = _even_centers(pool["n_beams"], pool["center_spacing_deg"])
        return arrays.sa_codebook(geom, params, centers)
    if kind == "qpd":
        centers = _even_centers(pool["n_beams"], pool["center_spacing_deg"])
        return arrays.qpd_codebook(
            geom, [QpdParams(pool["phi_max"], c) for c in centers]
        )
    if kind == "pencil":
        lo, hi = pool["span_deg"]
        return arrays.pencil_codebook(geom, np.linspace(lo, hi, pool["n_beams"]))
    raise ConfigError(f"unknown pool type {kind!r}")


def build_pools(cfg) -> dict:
    return {name: build_pool(cfg, p) for name, p in cfg["sensing"]["pools"].items()}


def full_sensing_codebook(cfg, pools: dict) -> Codebook:
    """Concatenation of every pool named in the mix, mix order."""
    parts = [pools[name] for name in cfg["sensing"]["mix"]]
    return parts[0] if len(parts) == 1 else arrays.mixed_codebook(*parts)


def subset_column_indices(cfg, pools: dict, m: int) -> list:
    """Columns of the full sensing codebook used at size m (nested in m)."""
    mix = cfg["sensing"]["mix"]
    fixed_total = sum(v for v in mix.values() if v is not None)
    n_fill = m - fixed_total
    if n_fill < 0:
        raise ConfigError(f"M={m} smaller than the fixed mix counts")
    cols, offset = [], 0
    for name in mix:
        cb = pools[name]
        count = mix[name] if mix[name] is not None else n_fill
        if count > cb.n_beams:
            raise ConfigError(f"M={m}: pool {name!r} has only {cb.n_beams} beams")
        if cb.kind in ("SA", "QPD", "Pencil"):
            order = metrics._center_out_order(cb)
        else:
            order = list(range(cb.n_beams))
        cols.extend(offset + i for i in order[:count])
        offset += cb.n_beams
    return cols


# ---------------------------------------------------------------------------
# stage plumbing

def _paths(out_dir):
    return {
        "codebooks": os.path.join(out_dir, "codebooks"),
        "dataset": os.path.join(out_dir, "dataset"),
        "models": os.path.join(out_dir, "models"),
        "eval": os.path.join(out_dir, "eval"),
        "sweep": os.path.join(out_dir, "sweep"),
        "figures": os.path.join(out_dir, "figures"),
    }


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def stage_codebooks(cfg, out_dir):
    p = _paths(out_dir)["codebooks"]
    os.makedirs(p, exist_ok=True)
    build_directional(cfg).save_json(os.path.join(p, "directional.json"))
    for name, cb in build_pools(cfg).items():
        cb.save_json(os.path.join(p, f"pool_{name}.json"))
    return p


def stage_dataset(cfg, out_dir) -> channel.SampleSet:
    p = _paths(out_dir)["dataset"]
    os.makedirs(p, exist_ok=True)
    geom = build_geometry(cfg)
    pools = build_pools(cfg)
    sensing = full_sensing_codebook(cfg, pools)
    directional = build_directional(cfg)
    proto = channel.SimProtocol(**cfg["protocol"])
    ds = channel.generate_sim_dataset(geom, sensing, directional, proto)
    ds.meta["label_histogram"] = ds.label_histogram()
    ds.save_csv(os.path.join(p, "dataset.csv"), os.path.join(p, "dataset.json"))
    return ds


def load_dataset(out_dir) -> channel.SampleSet:
    p = _paths(out_dir)["dataset"]
    csv = os.path.join(p, "dataset.csv")
    if not os.path.exists(csv):
        raise MissingArtifactError("dataset stage has not run (missing dataset.csv)")
    return channel.SampleSet.load_csv(csv, os.path.join(p, "dataset.json"))


def _alg_spec(cfg, name):
    for a in cfg["algorithms"]:
        if a["name"] == name:
            return a
    return None


def _train_one(cfg, spec, train_set, m, n_classes) -> nn.PredictorModel:
    common = dict(
        learning_rate=spec.get("learning_rate", 1e-3),
        decay_rho=spec.get("decay_rho", 0.9),
        epsilon_stab=spec.get("epsilon_stab", 1e-8),
        batch_size=spec.get("batch_size", 32),
        epochs=spec.get("epochs", 100),
        seed=spec.get("seed", 0),
    )
    tc = nn.TrainConfig(**common)
    if spec["name"] == "mlp":
        arch = nn.MlpArch(m, tuple(spec.get("hidden", (128, 128))), n_classes)
    else:
        convs = tuple(
            nn.ConvSpec(**c) for c in spec.get(
                "conv_layers",
                [{"filters": 16, "kernel_size": 3, "stride": 1},
                 {"filters": 16, "kernel_size": 3, "stride": 1}],
            )
        )
        arch = nn.CnnArch(m, convs, tuple(spec.get("hidden", (128, 128))), n_classes)
    return nn.train(train_set, arch, tc)


def _split_for_m(cfg, dataset, pools, m):
    """Column-select the dataset at size m, then validate/split."""
    cols = subset_column_indices(cfg, pools, m)
    ds_m = channel.SampleSet(
        features=dataset.features[:, cols],
        labels=dataset.labels,
        alphas=dataset.alphas,
        aoas=dataset.aoas,
        meta=dict(dataset.meta),
    )
    spec = metrics.SplitSpec(
        train_per_label=cfg["split"]["train_per_label"],
        split_seed=cfg["split"]["split_seed"],
    )
    return metrics.validate_and_split(ds_m, spec)


def stage_train(cfg, out_dir, dataset=None):
    """Train every ML algorithm at every M in the sweep grid."""
    if dataset is None:
        dataset = load_dataset(out_dir)
    p = _paths(out_dir)["models"]
    os.makedirs(p, exist_ok=True)
    pools = build_pools(cfg)
    trained = {}
    for spec in cfg["algorithms"]:
        if spec["name"] not in ("mlp", "cnn"):
            continue
        for m in cfg["sensing"]["m_values"]:
            train_set, _, kept = _split_for_m(cfg, dataset, pools, m)
            model = _train_one(cfg, spec, train_set, m, len(kept))
            tag = f"{spec['name']}_M{m}"
            model.save_json(os.path.join(p, f"{tag}.json"))
            nn.save_loss_csv(model, os.path.join(p, f"{tag}_loss.csv"))
            trained[tag] = model
    return trained


def _test_directional_powers(cfg, test_set) -> np.ndarray:
    """Noise-free per-sample directional powers, recomputed from the stored
    channel parameters."""
    geom = build_geometry(cfg)
    directional = build_directional(cfg)
    P = np.empty((test_set.n_samples, directional.n_beams))
    for i in range(test_set.n_samples):
        phis = test_set.aoas[i]
        phis = phis[~np.isnan(phis)]
        params = channel.ChannelParams(
            n_paths=len(phis), alpha=float(test_set.alphas[i]), aoa_deg=phis,
            min_separation=0.0 if len(phis) == 1 else
            cfg["protocol"].get("min_separation_deg", 2.0),
        )
        P[i] = channel.directional_powers(
            directional, channel.realize_channel(geom, params).h
        )
    return P


def _predict_model_based(cfg, spec, pools, test_set, cols):
    """Per-sample predictions in the original directional label space."""
    directional = build_directional(cfg)
    full = full_sensing_codebook(cfg, pools)
    sensing = full.subset(cols)
    if spec["name"] == "exhaustive":
        return np.array([
            sparse.exhaustive_predict(row) for row in test_set.features
        ])
    if spec["name"] == "rss_mp":
        d = sparse.build_rss_dictionary(sensing, directional, "Power")
        n_iters = spec.get("n_iters", cfg["protocol"].get("n_paths", 3))
        return np.array([
            sparse.rss_mp_predict(d, row, n_iters) for row in test_set.features
        ])
    if spec["name"] == "phaseless_l1":
        d = sparse.build_rss_dictionary(sensing, directional, "Magnitude")
        l1 = sparse.L1Config(
            gamma=spec.get("gamma", 0.01),
            max_iters=spec.get("max_iters", 5000),
            tol=spec.get("tol", 1e-8),
        )
        preds = np.empty(test_set.n_samples, dtype=int)
        for i, row in enumerate(test_set.features):
            try:
                preds[i] = sparse.solve_phaseless_l1(d, row, l1).selected
            except sparse.SolverError as e:
                preds[i] = int(np.argmax(e.x))
        return preds
    raise ConfigError(f"not a model-based algorithm: {spec['name']}")


def evaluate_at_m(cfg, dataset, pools, m, models=None, out_dir=None):
    """EvalReports for every configured algorithm at sensing size m.

    ML predictions are mapped from the dense kept-label space back to the
    original directional beam indices before scoring.
    """
    cols = subset_column_indices(cfg, pools, m)
    train_set, test_set, kept = _split_for_m(cfg, dataset, pools, m)
    inv_kept = {v: k for k, v in kept.items()}
    # test labels in the original directional space
    true_orig = np.array([inv_kept[int(l)] for l in test_set.labels])
    powers = _test_directional_powers(cfg, test_set)
    percentile = cfg["metric"]["percentile"]
    reports = {}
    for spec in cfg["algorithms"]:
        name = spec["name"]
        if name == "exhaustive" and m != build_directional(cfg).n_beams:
            # exhaustive search needs the full directional codebook; score it
            # on noise-free directional powers as the genie reference
            preds = np.argmax(powers, axis=1)
        elif name in ("mlp", "cnn"):
            tag = f"{name}_M{m}"
            if models is not None and tag in models:
                model = models[tag]
            elif out_dir is not None:
                path = os.path.join(_paths(out_dir)["models"], f"{tag}.json")
                if not os.path.exists(path):
                    raise MissingArtifactError(
                        f"train stage has not produced {tag}.json"
                    )
                model = nn.PredictorModel.load_json(path)
            else:
                model = _train_one(cfg, spec, train_set, m, len(kept))
            feats = nn.transform_features(test_set, model.transform)
            preds_dense = nn.predict(model, feats)
            preds = np.array([inv_kept[int(p)] for p in preds_dense])
        else:
            preds = _predict_model_based(cfg, spec, pools, test_set, cols)
        reports[name] = metrics.make_eval_report(
            name, powers, true_orig, preds, kept_labels=len(kept),
            percentiles=(50.0, float(percentile), 99.0),
            diagnostics={"M": m, "n_train": train_set.n_samples},
        )
    return reports, test_set


def stage_eval(cfg, out_dir, dataset=None, models=None):
    if dataset is None:
        dataset = load_dataset(out_dir)
    p = _paths(out_dir)["eval"]
    os.makedirs(p, exist_ok=True)
    pools = build_pools(cfg)
    all_reports = {}
    for m in cfg["sensing"]["m_values"]:
        reports, _ = evaluate_at_m(cfg, dataset, pools, m, models=models,
                                   out_dir=out_dir)
        for name, rep in reports.items():
            rep.save_json(os.path.join(p, f"report_{name}_M{m}.json"))
            rep.save_records_csv(os.path.join(p, f"records_{name}_M{m}.csv"))
        all_reports[m] = reports
    return all_reports


def stage_sweep(cfg, out_dir, dataset=None, models=None, all_reports=None):
    """Flatten per-(algorithm, M, alpha) percentile losses and compute the
    required number of measurements at the configured threshold."""
    if all_reports is None:
        if dataset is None:
            dataset = load_dataset(out_dir)
        all_reports = stage_eval(cfg, out_dir, dataset=dataset, models=models)
    if dataset is None:
        dataset = load_dataset(out_dir)
    p = _paths(out_dir)["sweep"]
    os.makedirs(p, exist_ok=True)
    pools = build_pools(cfg)
    percentile = float(cfg["metric"]["percentile"])
    threshold = float(cfg["metric"]["threshold_db"])
    mix_name = "+".join(
        f"{v or ''}{k}" for k, v in cfg["sensing"]["mix"].items()
    )

    k = cfg["directional"]["n_beams"]
    rows = []
    curves = {}
    for m, reports in sorted(all_reports.items()):
        _, test_set, = evaluate_split_only(cfg, dataset, pools, m)
        for name, rep in reports.items():
            q = rep.gain_loss_db_percentiles[percentile]
            if name == "exhaustive":
                # an exhaustive search always spends K measurements
                curves[name] = {k: 0.0}
                continue
            curves.setdefault(name, {})[m] = q
            rows.append((name, mix_name, m, "all", percentile, q))
            for alpha in sorted(set(test_set.alphas.tolist())):
                mask = test_set.alphas == alpha
                q_a = metrics.percentile_loss(rep.losses_db[mask], percentile)
                rows.append((name, mix_name, m, alpha, percentile, q_a))
    required = metrics.required_measurements(curves, threshold, percentile)
    with open(os.path.join(p, "sweep.csv"), "w") as f:
        f.write("algorithm,codebook,M,alpha,percentile,loss_db\n")
        for r in rows:
            loss = r[5]
            loss_s = f"{loss:.17g}" if np.isfinite(loss) else "inf"
            f.write(f"{r[0]},{r[1]},{r[2]},{r[3]},{r[4]:g},{loss_s}\n")
    with open(os.path.join(p, "required.json"), "w") as f:
        json.dump(
            {"threshold_db": threshold, "percentile": percentile,
             "required_measurements": required},
            f, indent=1, sort_keys=True,
        )
    return rows, required


def evaluate_split_only(cfg, dataset, pools, m):
    train_set, test_set, _ = _split_for_m(cfg, dataset, pools, m)
    return train_set, test_set


def stage_figures(cfg, out_dir, which="all"):
    from beamsense import figures as figmod
    p = _paths(out_dir)["figures"]
    os.makedirs(p, exist_ok=True)
    made = []
    sweep_csv = os.path.join(_paths(out_dir)["sweep"], "sweep.csv")
    required_json = os.path.join(_paths(out_dir)["sweep"], "required.json")
    if which in ("all", "fig1"):
        made += figmod.fig1_sparsity_study(cfg, p)
    if which in ("all", "fig6", "fig7", "fig9"):
        if not os.path.exists(sweep_csv):
            raise MissingArtifactError("sweep stage has not run (missing sweep.csv)")
    if which in ("all", "fig6"):
        made += figmod.fig6_loss_vs_alpha(sweep_csv, p)
    if which in ("all", "fig7"):
        made += figmod.fig7_loss_vs_m(sweep_csv, p)
    if which in ("all", "fig9"):
        if not os.path.exists(required_json):
            raise MissingArtifactError("sweep stage has not run (missing required.json)")
        made += figmod.fig9_required_measurements(required_json, p)
    return made


def write_manifest(cfg, out_dir):
    """Hashes of every persisted artifact plus the overhead accounting."""
    paths = _paths(out_dir)
    artifacts = {}
    for stage, d in paths.items():
        if not os.path.isdir(d):
            continue
        for fn in sorted(os.listdir(d)):
            fp = os.path.join(d, fn)
            if os.path.isfile(fp):
                artifacts[f"{stage}/{fn}"] = _file_hash(fp)
    m_values = cfg["sensing"]["m_values"]
    k = cfg["directional"]["n_beams"]
    manifest = {
        "config_hash": config_hash(cfg),
        "schema_version": cfg["schema_version"],
        "artifacts": artifacts,
        "overhead": {
            # measurements per channel use in each lifecycle stage
            "training_stage_per_sample": {str(m): m + k for m in m_values},
            "testing_stage_per_sample": {str(m): m for m in m_values},
            "exhaustive_search": k,
        },
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def run_experiment(config_path, out_dir=None) -> str:
    """Full pipeline: codebooks, dataset, models, eval, sweep, figures,
    manifest.  Returns the artifact directory."""
    cfg = load_config(config_path)
    out_dir = out_dir or cfg.get("out_dir")
    if not out_dir:
        raise ConfigError("no output directory (config out_dir or --out)")
    os.makedirs(out_dir, exist_ok=True)
    stage_codebooks(cfg, out_dir)
    dataset = stage_dataset(cfg, out_dir)
    models = stage_train(cfg, out_dir, dataset=dataset)
    all_reports = stage_eval(cfg, out_dir, dataset=dataset, models=models)
    stage_sweep(cfg, out_dir, dataset=dataset, models=models,
                all_reports=all_reports)
    stage_figures(cfg, out_dir, which="all")
    write_manifest(cfg, out_dir)
    return out_dir
