"""End-to-end experiment orchestration: train, attack, evaluate, report.

An experiment is a pure function of its :class:`ExperimentConfig`,
including every random stream: sub-seeds for the dataset, training, and
each attack are derived from the single global seed. Running the same
config twice produces byte-identical outputs.

Config files are flat key-value text with one section per module
(INI syntax, parsed by :mod:`configparser`); see ``default_config`` for
the schema and the README for documentation. A config round-trips through
its file form losslessly.

Output files, all with LF line endings and '.' decimals:

* ``scores_<attack>.csv``        per-sample scores (raw and filtered)
* ``metrics_<attack>_raw.json``  metrics of the unfiltered scores
* ``metrics_<attack>_filtered.json``
* ``roc_<attack>_raw.csv`` / ``roc_<attack>_filtered.csv``
* ``train_loss.csv``             per-epoch training loss trace
* ``model.fmia``                 trained denoiser weights
* ``failed_hf.json``             misclassified-sample frequency analysis
* ``comparison.csv``             raw vs filtered deltas with an avg row
* ``experiment.json``            combined report

If any stage fails, whatever was already produced moves under
``<out>/partial/`` and an :class:`ExperimentError` naming the stage is
raised.
"""

import configparser
import csv
import json
import shutil
from dataclasses import dataclass
from pathlib import Path

from .attacks import AttackConfig, run_attack, write_score_csv
from .datasets import DatasetSpec, generate_dataset
from .denoiser import TrainingConfig, save_denoiser, train_toy_denoiser
from .diffusion import linear_schedule
from .errors import ConfigurationError, ExperimentError
from .evaluation import (
    build_metrics_report,
    compute_asr,
    compute_roc,
    failed_sample_hf_analysis,
    write_metrics_json,
    write_roc_csv,
)
from .seeding import derive_seed
from .spectral import FilterSpec

__all__ = ["ExperimentConfig", "default_config", "run_experiment", "evaluate_records"]

METRIC_KEYS = ("asr", "auc", "tpr_at_1pct_fpr")


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment."""

    seed: int = 0
    out_dir: str = "out"
    boundary_radius: float = 2.0
    # dataset
    dataset_kind: str = "sharpened"
    size: int = 16
    gamma_min: float = 1.5
    gamma_max: float = 3.0
    n_member: int = 200
    n_holdout: int = 200
    dataset_path: str | None = None
    # schedule
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    # training (overfits the 200-image member set by design)
    epochs: int = 5000
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    hidden_sizes: tuple = (256,)
    embedding_dim: int = 16
    # attacks
    attack_kinds: tuple = ("naive", "pia", "secmi")
    q: int = 2
    filter_s: float = 0.2
    filter_rt: float = 5.0
    naive_t: int = 200
    pia_t: int = 200
    secmi_t: int = 100
    secmi_stride: int = 10

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(
            kind=self.dataset_kind,
            size=self.size,
            gamma_range=(self.gamma_min, self.gamma_max),
            n_member=self.n_member,
            n_holdout=self.n_holdout,
            seed=derive_seed(self.seed, "dataset"),
            path=self.dataset_path,
        )

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            seed=derive_seed(self.seed, "training"),
        )

    def filter_spec(self) -> FilterSpec:
        return FilterSpec(s=self.filter_s, r_t=self.filter_rt)

    def attack_configs(self) -> list[AttackConfig]:
        t_for = {"naive": self.naive_t, "pia": self.pia_t, "secmi": self.secmi_t}
        return [
            AttackConfig(
                kind=kind,
                t_attack=t_for[kind],
                stride=self.secmi_stride,
                q=self.q,
                seed=derive_seed(self.seed, "attack", kind),
                filter=self.filter_spec(),
            )
            for kind in self.attack_kinds
        ]

    def to_file(self, path) -> None:
        parser = configparser.ConfigParser()
        parser["experiment"] = {
            "seed": str(self.seed),
            "out_dir": self.out_dir,
            "boundary_radius": repr(self.boundary_radius),
        }
        parser["dataset"] = {
            "kind": self.dataset_kind,
            "size": str(self.size),
            "gamma_min": repr(self.gamma_min),
            "gamma_max": repr(self.gamma_max),
            "n_member": str(self.n_member),
            "n_holdout": str(self.n_holdout),
        }
        if self.dataset_path is not None:
            parser["dataset"]["path"] = self.dataset_path
        parser["schedule"] = {
            "timesteps": str(self.timesteps),
            "beta_start": repr(self.beta_start),
            "beta_end": repr(self.beta_end),
        }
        parser["training"] = {
            "epochs": str(self.epochs),
            "batch_size": str(self.batch_size),
            "learning_rate": repr(self.learning_rate),
            "momentum": repr(self.momentum),
            "hidden_sizes": ",".join(str(s) for s in self.hidden_sizes),
            "embedding_dim": str(self.embedding_dim),
        }
        parser["attacks"] = {
            "kinds": ",".join(self.attack_kinds),
            "q": str(self.q),
            "filter_s": repr(self.filter_s),
            "filter_rt": repr(self.filter_rt),
            "naive_t": str(self.naive_t),
            "pia_t": str(self.pia_t),
            "secmi_t": str(self.secmi_t),
            "secmi_stride": str(self.secmi_stride),
        }
        with open(path, "w", newline="\n") as fh:
            parser.write(fh)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc

        def get(section, key, cast, default):
            if parser.has_option(section, key):
                try:
                    return cast(parser.get(section, key))
                except ValueError as exc:
                    raise ConfigurationError(f"{path}: [{section}] {key}: {exc}") from exc
            return default

        base = cls()
        return cls(
            seed=get("experiment", "seed", int, base.seed),
            out_dir=get("experiment", "out_dir", str, base.out_dir),
            boundary_radius=get("experiment", "boundary_radius", float, base.boundary_radius),
            dataset_kind=get("dataset", "kind", str, base.dataset_kind),
            size=get("dataset", "size", int, base.size),
            gamma_min=get("dataset", "gamma_min", float, base.gamma_min),
            gamma_max=get("dataset", "gamma_max", float, base.gamma_max),
            n_member=get("dataset", "n_member", int, base.n_member),
            n_holdout=get("dataset", "n_holdout", int, base.n_holdout),
            dataset_path=get("dataset", "path", str, base.dataset_path),
            timesteps=get("schedule", "timesteps", int, base.timesteps),
            beta_start=get("schedule", "beta_start", float, base.beta_start),
            beta_end=get("schedule", "beta_end", float, base.beta_end),
            epochs=get("training", "epochs", int, base.epochs),
            batch_size=get("training", "batch_size", int, base.batch_size),
            learning_rate=get("training", "learning_rate", float, base.learning_rate),
            momentum=get("training", "momentum", float, base.momentum),
            hidden_sizes=get("training", "hidden_sizes",
                             lambda s: tuple(int(v) for v in s.split(",") if v), base.hidden_sizes),
            embedding_dim=get("training", "embedding_dim", int, base.embedding_dim),
            attack_kinds=get("attacks", "kinds",
                             lambda s: tuple(v.strip() for v in s.split(",") if v.strip()),
                             base.attack_kinds),
            q=get("attacks", "q", int, base.q),
            filter_s=get("attacks", "filter_s", float, base.filter_s),
            filter_rt=get("attacks", "filter_rt", float, base.filter_rt),
            naive_t=get("attacks", "naive_t", int, base.naive_t),
            pia_t=get("attacks", "pia_t", int, base.pia_t),
            secmi_t=get("attacks", "secmi_t", int, base.secmi_t),
            secmi_stride=get("attacks", "secmi_stride", int, base.secmi_stride),
        )


def default_config(seed: int = 0, out_dir: str = "out") -> ExperimentConfig:
    """The default desk-scale experiment: 16x16 sharpened fields, 200+200
    samples, overfit training, all three attacks with the (s=0.2, r_t=5)
    filter."""
    return ExperimentConfig(seed=seed, out_dir=out_dir)


def evaluate_records(records) -> dict:
    """Metrics for one attack's records: raw column, filtered column when
    present, and the failed-sample frequency analysis at the ASR-optimal
    threshold of each column."""
    result = {}
    has_filter = records[0].score_filtered is not None
    for variant, use_filtered in (("raw", False), ("filtered", True)):
        if use_filtered and not has_filter:
            continue
        report = build_metrics_report(records, use_filtered)
        _, tau = compute_asr(records, use_filtered)
        failed_m, failed_h = failed_sample_hf_analysis(records, tau, use_filtered)
        result[variant] = {
            "metrics": report,
            "tau": tau,
            "failed_hf": {"member": failed_m, "holdout": failed_h},
            "curve": compute_roc(records, use_filtered),
        }
    return result


def _write_comparison(path, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["attack"]
        for key in METRIC_KEYS:
            header += [f"{key}_raw", f"{key}_filtered", f"{key}_delta"]
        writer.writerow(header)
        deltas = {key: [] for key in METRIC_KEYS}
        for kind, raw, filt in rows:
            cells = [kind]
            for key in METRIC_KEYS:
                r, f = getattr(raw, key), getattr(filt, key)
                cells += [f"{r:.12g}", f"{f:.12g}", f"{f - r:.12g}"]
                deltas[key].append(f - r)
            writer.writerow(cells)
        avg = ["avg+"]
        for key in METRIC_KEYS:
            avg += ["", "", f"{sum(deltas[key]) / len(deltas[key]):.12g}"]
        writer.writerow(avg)


def run_experiment(config: ExperimentConfig, denoiser_factory=None) -> dict:
    """Run the full pipeline and return the combined report dictionary.

    ``denoiser_factory(member_images, config, sched)`` replaces training
    when given; it exists so tests can inject stub denoisers. No model
    file or loss trace is written in that case.
    """
    if not config.attack_kinds:
        raise ConfigurationError("experiment needs at least one attack")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, writer) -> Path:
        target = out / name
        writer(target)
        written.append(target)
        return target

    stage = "dataset"
    try:
        samples = generate_dataset(config.dataset_spec())
        members = [s.image for s in samples if s.membership == 1]
        if not members or all(s.membership == 1 for s in samples):
            raise ConfigurationError("dataset must contain both members and hold-outs")
        sched = linear_schedule(config.timesteps, config.beta_start, config.beta_end)

        stage = "train"
        if denoiser_factory is not None:
            denoiser, trace = denoiser_factory(members, config, sched), []
        else:
            denoiser, trace = train_toy_denoiser(
                members, config.training_config(), sched,
                hidden_sizes=config.hidden_sizes, emb_dim=config.embedding_dim,
            )
            emit("model.fmia", lambda p: save_denoiser(denoiser, p))

            def write_trace(p):
                with open(p, "w", newline="\n") as fh:
                    writer = csv.writer(fh, lineterminator="\n")
                    writer.writerow(["epoch", "loss"])
                    for i, loss in enumerate(trace):
                        writer.writerow([i, f"{loss:.12g}"])

            emit("train_loss.csv", write_trace)

        report = {"config": {"seed": config.seed}, "attacks": {}}
        comparison_rows = []
        failed_hf = {}
        for attack_cfg in config.attack_configs():
            kind = attack_cfg.kind
            stage = f"attack:{kind}"
            records = run_attack(samples, attack_cfg, denoiser, sched,
                                 hf_boundary_radius=config.boundary_radius)
            emit(f"scores_{kind}.csv", lambda p, r=records: write_score_csv(r, p))

            stage = f"eval:{kind}"
            evaluated = evaluate_records(records)
            report["attacks"][kind] = {}
            failed_hf[kind] = {}
            for variant, data in evaluated.items():
                emit(f"metrics_{kind}_{variant}.json",
                     lambda p, m=data["metrics"]: write_metrics_json(m, p))
                emit(f"roc_{kind}_{variant}.csv",
                     lambda p, c=data["curve"]: write_roc_csv(c, p))
                report["attacks"][kind][variant] = data["metrics"].to_json_dict()
                report["attacks"][kind][variant]["tau"] = data["tau"]
                failed_hf[kind][variant] = data["failed_hf"]
            comparison_rows.append(
                (kind, evaluated["raw"]["metrics"], evaluated["filtered"]["metrics"])
            )

        stage = "report"
        emit("failed_hf.json", lambda p: Path(p).write_text(
            json.dumps(failed_hf, indent=2) + "\n"))
        emit("comparison.csv", lambda p: _write_comparison(p, comparison_rows))
        report["failed_hf"] = failed_hf
        report["final_train_loss"] = trace[-1] if trace else None
        emit("experiment.json", lambda p: Path(p).write_text(
            json.dumps(report, indent=2) + "\n"))
        return report
    except Exception as exc:
        partial = out / "partial"
        partial.mkdir(exist_ok=True)
        for produced in written:
            if produced.exists():
                shutil.move(str(produced), str(partial / produced.name))
        raise ExperimentError(stage, str(exc)) from exc
