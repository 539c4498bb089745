"""
Experiment orchestration behind the command line.

Output layout under the configured out directory:

    config.conf                       resolved configuration
    manifest.json                     every file below with its seeds
    scenarios/s<seed>.json            frozen environments
    data/s<seed>/<cond>/snr<x>/r<k>/  train/test PDP, labels, targets, noise, features
    selection/                        per-cell selection tables and fstar.csv
    metrics.csv, summary.csv          classification rates and the rate/size tradeoff
    timings.csv, history/, checkpoints/
    sanity.csv                        rates on randomly redrawn labels
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .config import ExperimentConfig
from .dataset import (
    SPLITS,
    PdpDataset,
    noise_for,
    random_labels,
    record_entropy,
    scenario_for,
    synthesize_records,
)
from .features import NormalizationStats, dimension_ratio
from .models import (
    MODEL_KINDS,
    build_model,
    classification_rate,
    feature_dim,
    fit_normalization,
    network_inputs,
    raw_inputs,
)
from .nnkernel import EpochMetrics, Network, build_network, predict, train
from .selection import (
    REFERENCE_CRITERION,
    REFERENCE_F_RANGE,
    REFERENCE_MEAN_ORDERED,
    REFERENCE_NU,
    REFERENCE_WEIGHT,
    SelectionInputs,
    SelectionTables,
    select_feature_size,
)
from .storage import (
    Manifest,
    export_pdp_csv,
    read_array,
    read_checkpoint,
    read_csv,
    read_json,
    write_array,
    write_checkpoint,
    write_csv,
    write_json,
    write_jsonl,
)

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "scenario", "condition", "snr_db", "repeat", "model", "F",
    "feature_dim", "rate", "run_seed", "selected",
)
SUMMARY_COLUMNS = (
    "condition", "snr_db", "model", "F", "feature_dim",
    "runs", "rate_mean", "rate_std", "rate_min", "rate_max", "selected",
)
TIMING_COLUMNS = ("scenario", "condition", "snr_db", "repeat", "model", "F", "seconds")
HISTORY_COLUMNS = ("epoch", "loss", "train_acc", "val_acc")
SANITY_COLUMNS = ("scenario", "condition", "snr_db", "repeat", "model", "F", "feature_dim", "rate", "chance")
SPLIT_STREAM = 99
INIT_STREAM = 5
SHUFFLE_STREAM = 6
LABEL_STREAM = 8


@dataclass(frozen=True)
class Cell:
    """One (scenario, condition, SNR, repeat) combination; the unit every command iterates over."""

    scenario: int
    condition: str
    snr_db: float
    repeat: int

    @property
    def los(self) -> bool:
        return self.condition == "los"

    @property
    def path(self) -> str:
        return f"s{self.scenario}/{self.condition}/snr{self.snr_db:g}/r{self.repeat}"

    def seeds(self, base: int, split: str) -> Dict[str, int]:
        return {"base": base, "scenario": self.scenario, "repeat": self.repeat, "split": split}


def cells(cfg: ExperimentConfig, repeats: Optional[int] = None) -> Iterator[Cell]:
    """Cells in scenario, condition, SNR, repeat order; repeats overrides the configured count."""
    exp = cfg.experiment
    for scenario, condition, snr, repeat in product(
        exp.scenario_seeds, exp.conditions, exp.snr_db, range(repeats or exp.repeats)
    ):
        yield Cell(scenario, condition, float(snr), repeat)


def _derived_seed(*values: int) -> int:
    return int(np.random.SeedSequence([int(value) for value in values]).generate_state(1)[0])


def _root(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out)


def _data_dir(cfg: ExperimentConfig, cell: Cell) -> Path:
    return _root(cfg) / "data" / cell.path


def _write_split(
    cfg: ExperimentConfig,
    manifest: Manifest,
    cell: Cell,
    split: str,
    dataset: PdpDataset,
) -> None:
    folder = _data_dir(cfg, cell)
    meta = {"scenario": cell.scenario, "condition": cell.condition, "snr_db": cell.snr_db,
            "repeat": cell.repeat, "split": split, "seed": cfg.seed}
    manifest.add(write_array(folder / f"{split}.pdp.bin", dataset.pdp), "pdp", **meta)
    manifest.add(write_array(folder / f"{split}.zones.bin", dataset.zones), "zones", **meta)
    manifest.add(write_array(folder / f"{split}.targets.bin", dataset.targets), "targets", **meta)
    records = [
        {"index": index, "scenario": cell.scenario, "condition": cell.condition, "snr_db": cell.snr_db,
         "repeat": cell.repeat, "split": split,
         "seed": record_entropy(cfg.seed, cell.scenario, cell.repeat, split, index),
         "zone": int(zone), "target": [float(v) for v in target]}
        for index, (zone, target) in enumerate(zip(dataset.zones, dataset.targets))
    ]
    manifest.add(write_jsonl(folder / f"{split}.records.jsonl", records), "records", **meta)
    for F in cfg.experiment.f_grid:
        powers, indices = dataset.features(F)
        stacked = np.stack((powers, indices.astype(float)), axis=1)
        manifest.add(write_array(folder / f"{split}.features.F{F}.bin", stacked), "features", F=F, **meta)


def cmd_generate(cfg: ExperimentConfig) -> Manifest:
    """Synthesize train/test PDP datasets and feature datasets for every cell."""
    root = _root(cfg)
    root.mkdir(parents=True, exist_ok=True)
    manifest = Manifest.load(root)
    (root / "config.conf").write_text(cfg.to_text(), encoding="utf-8")
    manifest.add(root / "config.conf", "config", seed=cfg.seed)
    exp = cfg.experiment
    layout = cfg.layout
    for F in exp.f_grid:
        log.info("F=%d: %d features per record, %.0f%% of the PDP size",
                 F, 2 * F * cfg.scene.M, 100 * dimension_ratio(F, cfg.detection.n_bins))

    for scenario_seed in exp.scenario_seeds:
        scenarios = {
            condition: scenario_for(cfg.channel, cfg.scene, cfg.detection, cfg.seed, scenario_seed, condition == "los")
            for condition in exp.conditions
        }
        payload = {"schema_version": cfg.schema_version, "seed": cfg.seed, "scenario_seed": scenario_seed}
        payload.update({condition: scenario.to_dict() for condition, scenario in scenarios.items()})
        path = write_json(root / "scenarios" / f"s{scenario_seed}.json", payload)
        manifest.add(path, "scenario", scenario=scenario_seed, seed=cfg.seed)

        for snr in exp.snr_db:
            detection = cfg.detection_at(snr)
            noise = noise_for(cfg.channel, cfg.scene, detection, cfg.seed, scenario_seed, exp.calibration_samples)
            log.info("scenario %d at %.1f dB: noise level %.4g mW", scenario_seed, snr, float(noise.mean()))
            for condition, repeat in product(exp.conditions, range(exp.repeats)):
                cell = Cell(scenario_seed, condition, float(snr), repeat)
                path = write_array(_data_dir(cfg, cell) / "noise.bin", noise)
                manifest.add(path, "noise", scenario=scenario_seed, condition=condition,
                             snr_db=float(snr), repeat=repeat, seed=cfg.seed)
                for split, count in (("train", exp.d_train), ("test", exp.d_test)):
                    dataset = synthesize_records(
                        count, cfg.channel, cfg.scene, layout, scenarios[condition],
                        detection, noise, cell.seeds(cfg.seed, split), workers=exp.workers,
                    )
                    _write_split(cfg, manifest, cell, split, dataset)
                log.info("generated %s", cell.path)
    manifest.write()
    return manifest


def load_split(cfg: ExperimentConfig, cell: Cell, split: str) -> PdpDataset:
    """
    Read one generated split back from disk.

    Raises FileNotFoundError when generate has not been run for the cell,
    which the CLI reports as "run generate first".
    """
    folder = _data_dir(cfg, cell)
    if not (folder / f"{split}.pdp.bin").exists():
        raise FileNotFoundError(f"no {split} dataset for {cell.path} under {cfg.out}; run generate first")
    return PdpDataset(
        read_array(folder / f"{split}.pdp.bin"),
        read_array(folder / f"{split}.zones.bin").astype(int),
        read_array(folder / f"{split}.targets.bin"),
        read_array(folder / "noise.bin"),
        cfg.detection.nu,
    )


def load_features(cfg: ExperimentConfig, cell: Cell, split: str, F: int) -> Tuple[np.ndarray, np.ndarray]:
    path = _data_dir(cfg, cell) / f"{split}.features.F{F}.bin"
    if not path.exists():
        raise ValueError(f"no F={F} features for {cell.path}; F grid and datasets disagree")
    stacked = read_array(path)
    return stacked[:, 0], stacked[:, 1]


def zone_samples(cfg: ExperimentConfig, cell: Cell, dataset: PdpDataset, f_values: Sequence[int]):
    """Normalized 2FM feature vectors of the training split grouped by zone, per F."""
    samples = {}
    for F in f_values:
        powers, indices = load_features(cfg, cell, "train", F)
        powers, indices = NormalizationStats.fit(powers, indices).normalize(powers, indices)
        vectors = np.concatenate((powers.reshape(len(powers), -1), indices.reshape(len(indices), -1)), axis=1)
        samples[F] = dataset.zone_groups(vectors, cfg.layout.n_zones)
    return samples


def usable_neighbors(cfg: ExperimentConfig, cell: Cell, dataset: PdpDataset) -> int:
    """Neighbour count u for KL_F, capped below the smallest zone's sample count.

    Raises ValueError when some zone has fewer than two training records.
    """
    counts = dataset.zone_counts(cfg.layout.n_zones)
    smallest = int(counts.min())
    if smallest < 2:
        raise ValueError(
            f"{cell.path}: zone {int(counts.argmin())} has {smallest} training records; "
            f"KL_F needs at least 2 per zone, raise d_train or use fewer zones"
        )
    neighbors = cfg.selection.neighbors
    if smallest <= neighbors:
        log.warning("%s: smallest zone has %d training records, using u=%d instead of %d",
                    cell.path, smallest, smallest - 1, neighbors)
        neighbors = smallest - 1
    return neighbors


def select_for_cell(cfg: ExperimentConfig, cell: Cell) -> SelectionTables:
    """Run feature-size selection on the cell's training split, every F in the configured range."""
    f_min, f_max = cfg.f_range
    missing = sorted(set(range(f_min, f_max + 1)) - set(cfg.experiment.f_grid))
    if missing:
        raise ValueError(f"selection range [{f_min}, {f_max}] needs features for F={missing} outside the F grid")
    dataset = load_split(cfg, cell, "train")
    inputs = SelectionInputs(
        mean_ordered=dataset.mean_ordered(),
        nu=cfg.detection.nu,
        f_min=f_min,
        f_max=f_max,
        weight=cfg.selection.weight_for(cell.condition),
        neighbors=usable_neighbors(cfg, cell, dataset),
        zone_samples=zone_samples(cfg, cell, dataset, range(f_min, f_max + 1)),
        kl_dim_factor=cfg.selection.kl_dim_factor,
        sensors=cfg.scene.M,
    )
    return select_feature_size(inputs, workers=cfg.experiment.workers)


def cmd_select_f(cfg: ExperimentConfig) -> Dict[Tuple[int, str, float], int]:
    """Run feature-size selection on the repeat-0 training split of every cell."""
    root = _root(cfg)
    manifest = Manifest.load(root)
    chosen = {}
    summary = []
    for cell in cells(cfg, repeats=1):
        tables = select_for_cell(cfg, cell)
        name = f"s{cell.scenario}_{cell.condition}_snr{cell.snr_db:g}.csv"
        path = write_csv(root / "selection" / name, tables.to_records())
        manifest.add(path, "selection", scenario=cell.scenario, condition=cell.condition,
                     snr_db=cell.snr_db, seed=cfg.seed)
        chosen[(cell.scenario, cell.condition, cell.snr_db)] = tables.f_star
        summary.append({"scenario": cell.scenario, "condition": cell.condition, "snr_db": cell.snr_db,
                        "f_star": tables.f_star, "weight": tables.weight,
                        "neighbors": tables.neighbors})
        log.info("%s: F*=%d", cell.path, tables.f_star)
    path = write_csv(root / "selection" / "fstar.csv", summary,
                     ("scenario", "condition", "snr_db", "f_star", "weight", "neighbors"))
    manifest.add(path, "fstar", seed=cfg.seed)
    manifest.write()
    return chosen


def load_f_star(cfg: ExperimentConfig) -> Dict[Tuple[int, str, float], int]:
    """F* keyed by (scenario, condition, snr_db); empty before select-f has run."""
    path = _root(cfg) / "selection" / "fstar.csv"
    if not path.exists():
        return {}
    return {
        (int(row["scenario"]), row["condition"], float(row["snr_db"])): int(row["f_star"])
        for row in read_csv(path)
    }


def _validation_split(cfg: ExperimentConfig, cell: Cell, n: int) -> Tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng([cfg.seed, cell.scenario, cell.repeat, SPLIT_STREAM]).permutation(n)
    n_val = int(round(cfg.training.val_fraction * n))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def _model_grid(cfg: ExperimentConfig, models: Sequence[str]) -> List[Tuple[str, int]]:
    grid = []
    for kind in models:
        grid += [(kind, F) for F in cfg.experiment.f_grid] if kind == "pnn" else [(kind, 0)]
    return grid


def _artifact_name(cell: Cell, kind: str, F: int) -> str:
    return f"s{cell.scenario}_{cell.condition}_snr{cell.snr_db:g}_r{cell.repeat}_{kind}_F{F}"


def _training_params(cfg: ExperimentConfig):
    training = cfg.training
    if not cfg.experiment.deterministic and training.shards == 1:
        training = replace(training, shards=cfg.experiment.workers)
    return training


@dataclass
class TrainedModel:
    """A fitted network with the statistics it was normalized with and its test rate in percent."""

    network: Network
    stats: NormalizationStats
    history: List[EpochMetrics]
    rate: float
    run_seed: int
    seconds: float


def _model_inputs(cfg, cell, kind, F, train_set, test_set, fit_index):
    if kind == "pnn":
        train_raw = load_features(cfg, cell, "train", F)
        test_raw = load_features(cfg, cell, "test", F)
    else:
        train_raw = raw_inputs(kind, train_set.pdp, train_set.noise, train_set.nu, F)
        test_raw = raw_inputs(kind, test_set.pdp, test_set.noise, test_set.nu, F)
    stats = fit_normalization(kind, train_raw[0][fit_index], train_raw[1][fit_index])
    return network_inputs(kind, *train_raw, stats), network_inputs(kind, *test_raw, stats), stats


def fit_and_score(
    cfg: ExperimentConfig,
    cell: Cell,
    kind: str,
    F: int,
    train_set: PdpDataset,
    test_set: PdpDataset,
    debug: bool = False,
) -> TrainedModel:
    """Train one model on a cell's training split and score it on the test split.

    Labels come from the datasets passed in, so callers may substitute them.
    The run seed depends only on (base seed, scenario, repeat, model, F).
    """
    training = _training_params(cfg)
    arch = cfg.architecture
    fit_index, val_index = _validation_split(cfg, cell, len(train_set))
    train_inputs, test_inputs, stats = _model_inputs(cfg, cell, kind, F, train_set, test_set, fit_index)

    run_seed = _derived_seed(cfg.seed, cell.scenario, cell.repeat, MODEL_KINDS.index(kind), F)
    spec = build_model(kind, train_set.M, max(F, 1), train_set.n_bins, cfg.layout.n_zones,
                       seed=_derived_seed(run_seed, INIT_STREAM), training=training,
                       widths=arch.conv_widths, hidden=arch.hidden)
    network = build_network(spec, debug=debug)
    started = time.perf_counter()
    history = train(
        network,
        [x[fit_index] for x in train_inputs],
        train_set.zones[fit_index],
        training,
        seed=_derived_seed(run_seed, SHUFFLE_STREAM),
        val_inputs=[x[val_index] for x in train_inputs],
        val_labels=train_set.zones[val_index],
    )
    seconds = time.perf_counter() - started
    rate = classification_rate(predict(network, test_inputs), test_set.zones)
    return TrainedModel(network, stats, history, rate, run_seed, seconds)


def cmd_train_eval(
    cfg: ExperimentConfig,
    models: Optional[Sequence[str]] = None,
    debug: bool = False,
) -> List[Dict[str, object]]:
    """Train every requested model per cell, score the held-out split, write metrics."""
    root = _root(cfg)
    manifest = Manifest.load(root)
    models = list(models or cfg.experiment.models)
    f_star = load_f_star(cfg)
    rows: List[Dict[str, object]] = []
    timings: List[Dict[str, object]] = []

    for cell in cells(cfg):
        train_set = load_split(cfg, cell, "train")
        test_set = load_split(cfg, cell, "test")
        selected = f_star.get((cell.scenario, cell.condition, cell.snr_db))

        for kind, F in _model_grid(cfg, models):
            trained = fit_and_score(cfg, cell, kind, F, train_set, test_set, debug=debug)
            name = _artifact_name(cell, kind, F)
            meta = {"scenario": cell.scenario, "condition": cell.condition, "snr_db": cell.snr_db,
                    "repeat": cell.repeat, "model": kind, "F": F, "seed": trained.run_seed}
            manifest.add(write_csv(root / "history" / f"{name}.csv",
                                   [vars(epoch) for epoch in trained.history], HISTORY_COLUMNS), "history", **meta)
            manifest.add(write_checkpoint(root / "checkpoints" / f"{name}.bin", trained.network.state()),
                         "checkpoint", **meta)
            manifest.add(write_json(root / "checkpoints" / f"{name}.json",
                                    {"normalization": trained.stats.to_dict(), "seed": trained.run_seed}),
                         "normalization", **meta)

            rows.append({
                "scenario": cell.scenario, "condition": cell.condition, "snr_db": cell.snr_db,
                "repeat": cell.repeat, "model": kind, "F": F,
                "feature_dim": feature_dim(kind, train_set.M, F, train_set.n_bins),
                "rate": trained.rate, "run_seed": trained.run_seed,
                "selected": "" if selected is None or kind != "pnn" else int(F == selected),
            })
            timings.append({key: rows[-1][key] for key in TIMING_COLUMNS if key in rows[-1]})
            timings[-1]["seconds"] = round(trained.seconds, 3)
            log.info("%s %s F=%d: %.2f%% (%.1f s)", cell.path, kind, F, trained.rate, trained.seconds)

    manifest.add(write_csv(root / "metrics.csv", rows, METRIC_COLUMNS), "metrics", seed=cfg.seed)
    manifest.add(write_csv(root / "summary.csv", summarize(rows), SUMMARY_COLUMNS), "summary", seed=cfg.seed)
    manifest.add(write_csv(root / "timings.csv", timings, TIMING_COLUMNS), "timings", seed=cfg.seed)
    manifest.write()
    return rows


def cmd_sanity(cfg: ExperimentConfig, models: Optional[Sequence[str]] = None) -> List[Dict[str, object]]:
    """Train and score on uniformly redrawn zone labels; writes sanity.csv.

    Test labels are independent of the frames, so every rate should sit
    near the chance level 100/N_z whatever the model learns.
    """
    root = _root(cfg)
    manifest = Manifest.load(root)
    models = list(models or cfg.experiment.models)
    n_zones = cfg.layout.n_zones
    rows: List[Dict[str, object]] = []
    for cell in cells(cfg, repeats=1):
        train_set, test_set = [
            random_labels(load_split(cfg, cell, split), n_zones,
                          _derived_seed(cfg.seed, cell.scenario, LABEL_STREAM, SPLITS[split]))
            for split in ("train", "test")
        ]
        for kind, F in _model_grid(cfg, models):
            trained = fit_and_score(cfg, cell, kind, F, train_set, test_set)
            rows.append({"scenario": cell.scenario, "condition": cell.condition, "snr_db": cell.snr_db,
                         "repeat": cell.repeat, "model": kind, "F": F,
                         "feature_dim": feature_dim(kind, train_set.M, F, train_set.n_bins),
                         "rate": trained.rate, "chance": 100.0 / n_zones})
            log.info("%s %s F=%d on random labels: %.2f%% (chance %.2f%%)",
                     cell.path, kind, F, trained.rate, 100.0 / n_zones)
    manifest.add(write_csv(root / "sanity.csv", rows, SANITY_COLUMNS), "sanity", seed=cfg.seed)
    manifest.write()
    return rows


def summarize(rows: Sequence[Dict[str, object]]) -> List[Dict[str, object]]:
    """Rate statistics per (condition, SNR, model, F) over scenarios and repeats."""
    groups: Dict[Tuple, List[Dict[str, object]]] = {}
    for row in rows:
        key = (row["condition"], float(row["snr_db"]), row["model"], int(row["F"]))
        groups.setdefault(key, []).append(row)
    out = []
    for (condition, snr, model, F), members in groups.items():
        rates = np.array([float(member["rate"]) for member in members])
        flags = [str(member.get("selected", "")) for member in members]
        out.append({
            "condition": condition, "snr_db": snr, "model": model, "F": F,
            "feature_dim": int(members[0]["feature_dim"]), "runs": len(rates),
            "rate_mean": float(rates.mean()), "rate_std": float(rates.std()),
            "rate_min": float(rates.min()), "rate_max": float(rates.max()),
            "selected": sum(flag == "1" for flag in flags),
        })
    return out


def cmd_eval(cfg: ExperimentConfig, models: Optional[Sequence[str]] = None) -> List[Dict[str, object]]:
    """Re-score saved checkpoints on the test splits; writes eval.csv."""
    root = _root(cfg)
    models = list(models or cfg.experiment.models)
    arch = cfg.architecture
    rows = []
    for cell in cells(cfg):
        test_set = load_split(cfg, cell, "test")
        for kind, F in _model_grid(cfg, models):
            name = _artifact_name(cell, kind, F)
            checkpoint = root / "checkpoints" / f"{name}.bin"
            if not checkpoint.exists():
                raise FileNotFoundError(f"no checkpoint {checkpoint}; run train first")
            stats = NormalizationStats(**read_json(root / "checkpoints" / f"{name}.json")["normalization"])
            if kind == "pnn":
                raw = load_features(cfg, cell, "test", F)
            else:
                raw = raw_inputs(kind, test_set.pdp, test_set.noise, test_set.nu, F)
            spec = build_model(kind, test_set.M, max(F, 1), test_set.n_bins, cfg.layout.n_zones,
                               widths=arch.conv_widths, hidden=arch.hidden)
            network = build_network(spec)
            network.load_state(read_checkpoint(checkpoint))
            rate = classification_rate(predict(network, network_inputs(kind, raw[0], raw[1], stats)), test_set.zones)
            rows.append({"scenario": cell.scenario, "condition": cell.condition, "snr_db": cell.snr_db,
                         "repeat": cell.repeat, "model": kind, "F": F,
                         "feature_dim": feature_dim(kind, test_set.M, F, test_set.n_bins), "rate": rate})
    write_csv(root / "eval.csv", rows, METRIC_COLUMNS[:8])
    return rows


def cmd_table1(out: Optional[str] = None) -> SelectionTables:
    """Selection steps on the reference ordered-power vector.

    The separability term is recovered from the reference criterion values
    and the computed information term, then fed back as KL_F.
    """
    f_min, f_max = REFERENCE_F_RANGE
    inputs = SelectionInputs(REFERENCE_MEAN_ORDERED, REFERENCE_NU, f_min, f_max, REFERENCE_WEIGHT)
    flat = select_feature_size(inputs, kl_values=[1.0] * len(inputs.f_values))
    term_a = np.array([row.term_a for row in flat.rows])
    term_b = 2.0 * np.asarray(REFERENCE_CRITERION) - term_a
    tables = select_feature_size(inputs, kl_values=term_b)
    if out is not None:
        write_csv(Path(out) / "table1.csv", tables.to_records())
    return tables


def format_table1(tables: SelectionTables) -> str:
    lines = [f"{'F':>3} {'psi2':>10} {'LL_F-LL_0':>10} {'P_th':>10} {'(a)':>7} {'(b)':>7} {'crit':>7}  p / P_f"]
    for row in tables.rows:
        p = " ".join(f"{value:.2f}" for value in row.p)
        acq = " ".join(f"{value:.2f}" for value in row.acquisition)
        mark = "*" if row.F == tables.f_star else " "
        lines.append(
            f"{row.F:>3} {row.psi2:>10.3e} {row.ll_gain:>10.3f} {row.p_th:>10.3e} "
            f"{row.term_a:>7.4f} {row.term_b:>7.4f} {row.criterion:>7.3f}{mark} [{p}] / [{acq}]"
        )
    lines.append(f"F* = {tables.f_star}")
    return "\n".join(lines)


def format_report(rows: Sequence[Dict[str, str]]) -> str:
    """Mean rate per (condition, SNR, model, F); '*' marks the selected F."""
    summary = summarize(rows)
    lines = [f"{'cond':<5} {'snr':>5} {'model':<8} {'F':>3} {'dim':>5} {'rate':>7} {'std':>6}"]
    for entry in sorted(summary, key=lambda e: (e["condition"], e["snr_db"], e["model"], e["F"])):
        mark = "*" if entry["selected"] else " "
        lines.append(
            f"{entry['condition']:<5} {entry['snr_db']:>5g} {entry['model']:<8} {entry['F']:>3} "
            f"{entry['feature_dim']:>5} {entry['rate_mean']:>6.2f}{mark} {entry['rate_std']:>6.2f}"
        )
    return "\n".join(lines)


def cmd_report(cfg: ExperimentConfig, influx: bool = False, export_pdp: Optional[str] = None) -> str:
    """Render metrics.csv, optionally publishing it and exporting one cell's raw PDP."""
    root = _root(cfg)
    path = root / "metrics.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run train first")
    rows = read_csv(path)
    if influx:
        from .influx import metric_lines, publish

        written = publish(metric_lines(rows, timestamp=int(time.time())))
        log.info("published %d records to InfluxDB", written)
    if export_pdp:
        cell = next(cells(cfg, repeats=1))
        dataset = load_split(cfg, cell, "test")
        export_pdp_csv(export_pdp, dataset.pdp, dataset.zones)
        log.info("exported %s test PDPs to %s", cell.path, export_pdp)
    return format_report(rows)
