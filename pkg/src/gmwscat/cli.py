"""Command-line front end: filters, scatter, manifest, train-eval, significance.

Corpus-scale intermediates (flattened feature matrices) are cached under the
output directory, keyed by a hash of the scattering configuration plus a
hash of the corpus listing, so classifier sweeps never recompute scattering.
Worker processes handle per-track scattering; all file writes happen in the
parent process.  Exit codes: 0 success, 2 configuration error, 3 data error,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import multiprocessing
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import audio_io, container
from .classify import cross_validate, glmnet_train, glmnet_factory, svm_factory
from .errors import ConfigError, DataError, NumericError
from .features import FeatureLayout, cumulative_layers, fit_pca, flatten
from .filters import DEFAULT_PEAK_FRACTION, FilterFamily, GmwParams, build_filter_bank
from .scattering import ScatteringConfig, scatter
from .significance import export_heatmap, significance_scores

log = logging.getLogger(__name__)

CACHE_ENV = "GMWSCAT_CACHE_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


@dataclass
class RunConfig:
    """Pipeline settings; the defaults reproduce the reference experiment."""

    data_root: Path | None = None
    out_dir: Path = Path("out")
    family: str = "gmw"
    beta: float = 4.0
    gamma: float = 2.0
    layers: int = 3
    qualities: tuple = (8.0, 4.0, 4.0)
    j_maxes: tuple = (32, 13, 9)
    sub_rates: tuple = (8, 8, 8)
    avg_rates: tuple = (32, 32, 32, 32)
    peak_fraction: float = DEFAULT_PEAK_FRACTION
    dtype: str = "float64"
    prune_paths: bool = False
    pca_k: int = 1000
    classifier: str = "svm"
    svm_c: float = 1.0
    repeats: int = 10
    seed: int = 0
    jobs: int = 1
    zscore: bool = False
    resample: bool = False
    downmix: bool = False

    def scattering_config(self, family: str | None = None) -> ScatteringConfig:
        m = self.layers
        return ScatteringConfig(
            num_layers=m,
            qualities=tuple(self.qualities[:m]),
            j_maxes=tuple(self.j_maxes[:m]),
            sub_rates=tuple(self.sub_rates[:m]),
            avg_rates=tuple(self.avg_rates[:m + 1]),
            family=FilterFamily(family or self.family),
            gmw=GmwParams(self.beta, self.gamma),
            peak_fraction=self.peak_fraction,
            dtype=self.dtype,
            prune_paths=self.prune_paths,
        )

    def cache_dir(self) -> Path:
        env = os.environ.get(CACHE_ENV)
        return Path(env) if env else self.out_dir / "cache"


def _int_tuple(text: str) -> tuple:
    return tuple(int(v) for v in text.split(","))


def _float_tuple(text: str) -> tuple:
    return tuple(float(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmwscat",
        description="Analytic-wavelet scattering features and genre classification")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_data=True):
        if with_data:
            p.add_argument("--data-root", type=Path, help="corpus root (genre dirs)")
        p.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--family", choices=["gmw", "morlet"], default="gmw")
        p.add_argument("--beta", type=float, default=4.0, help="Morse time-decay exponent")
        p.add_argument("--gamma", type=float, default=2.0, help="Morse frequency-decay exponent")
        p.add_argument("--layers", type=int, default=3, choices=[1, 2, 3])
        p.add_argument("--qualities", type=_float_tuple, default=(8.0, 4.0, 4.0),
                       help="per-layer filters per octave, comma separated")
        p.add_argument("--j-maxes", type=_int_tuple, default=(32, 13, 9),
                       help="per-layer largest scale index, comma separated")
        p.add_argument("--sub-rates", type=_int_tuple, default=(8, 8, 8),
                       help="per-layer subsampling rates")
        p.add_argument("--avg-rates", type=_int_tuple, default=(32, 32, 32, 32),
                       help="averaging subsampling rates (order 0 first)")
        p.add_argument("--peak-frac", type=float, default=DEFAULT_PEAK_FRACTION,
                       help="finest-filter peak as a fraction of Nyquist")
        p.add_argument("--float32", action="store_true", help="single-precision scattering")
        p.add_argument("--prune-paths", action="store_true",
                       help="zero out frequency-increasing paths")

    p_filters = sub.add_parser("filters", help="build and export the layer filter banks")
    add_common(p_filters, with_data=False)
    p_filters.add_argument("--input-len", type=int, default=audio_io.SEGMENT_LEN,
                           help="segment length the banks are sized for")
    p_filters.add_argument("--csv", action="store_true",
                           help="also write (large) CSV copies for inspection")

    p_scatter = sub.add_parser("scatter", help="scatter one file or a whole corpus")
    add_common(p_scatter)
    p_scatter.add_argument("--input", type=Path, help="single audio file")
    p_scatter.add_argument("--csv", action="store_true", help="also write CSV exports")
    p_scatter.add_argument("--resample", action="store_true")
    p_scatter.add_argument("--downmix", action="store_true")
    p_scatter.add_argument("--jobs", type=int, default=1)

    p_manifest = sub.add_parser("manifest", help="write the corpus manifest CSV")
    p_manifest.add_argument("--data-root", type=Path, required=True)
    p_manifest.add_argument("--out", type=Path, default=Path("manifest.csv"))

    p_train = sub.add_parser("train-eval", help="cross-validated genre classification")
    add_common(p_train)
    p_train.add_argument("--classifier", choices=["svm", "glmnet"], default="svm")
    p_train.add_argument("--svm-c", type=float, default=1.0)
    p_train.add_argument("--pca-k", type=int, default=1000)
    p_train.add_argument("--repeats", type=int, default=10)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--jobs", type=int, default=1)
    p_train.add_argument("--zscore", action="store_true",
                         help="z-score features before PCA")
    p_train.add_argument("--resample", action="store_true")
    p_train.add_argument("--downmix", action="store_true")
    p_train.add_argument("--save-model", action="store_true",
                         help="fit PCA + lasso-GLM on the full corpus and save")
    p_train.add_argument("--full-table", action="store_true",
                         help="sweep layers 1-3 x {gmw-glmnet, gmw-svm, morlet-svm}")

    p_sig = sub.add_parser("significance", help="per-genre significance heatmaps")
    p_sig.add_argument("--model-dir", type=Path, required=True,
                       help="directory written by train-eval --save-model")
    p_sig.add_argument("--out-dir", type=Path, default=Path("out"))
    p_sig.add_argument("--clamp", type=float, default=0.4)
    return parser


def config_from_args(args) -> RunConfig:
    cfg = RunConfig(
        data_root=getattr(args, "data_root", None),
        out_dir=args.out_dir,
        family=args.family,
        beta=args.beta,
        gamma=args.gamma,
        layers=args.layers,
        qualities=args.qualities,
        j_maxes=args.j_maxes,
        sub_rates=args.sub_rates,
        avg_rates=args.avg_rates,
        peak_fraction=args.peak_frac,
        dtype="float32" if args.float32 else "float64",
        prune_paths=args.prune_paths,
        pca_k=getattr(args, "pca_k", 1000),
        classifier=getattr(args, "classifier", "svm"),
        svm_c=getattr(args, "svm_c", 1.0),
        repeats=getattr(args, "repeats", 10),
        seed=getattr(args, "seed", 0),
        jobs=getattr(args, "jobs", 1),
        zscore=getattr(args, "zscore", False),
        resample=getattr(args, "resample", False),
        downmix=getattr(args, "downmix", False),
    )
    cfg.scattering_config()  # validate early
    return cfg


# ---------------------------------------------------------------------------
# feature cache


def _chain_lengths(n: int, cfg: ScatteringConfig) -> list:
    lengths = [n]
    for r in cfg.sub_rates:
        n = -(-n // r)
        lengths.append(n)
    return lengths


def config_hash(scfg: ScatteringConfig) -> str:
    payload = repr((scfg.num_layers, scfg.qualities, scfg.j_maxes, scfg.sub_rates,
                    scfg.avg_rates, scfg.family.value, scfg.gmw.beta, scfg.gmw.gamma,
                    scfg.peak_fraction, scfg.dtype, scfg.prune_paths))
    return hashlib.sha1(payload.encode()).hexdigest()[:16]


def corpus_hash(dataset: audio_io.Dataset) -> str:
    h = hashlib.sha1()
    for ref in dataset.tracks:
        h.update(ref.id.encode())
        h.update(str(ref.path.stat().st_size).encode())
    return h.hexdigest()[:16]


_WORKER: dict = {}


def _init_worker(scfg, layer_set, resample, downmix):
    _WORKER["scfg"] = scfg
    _WORKER["layers"] = layer_set
    _WORKER["resample"] = resample
    _WORKER["downmix"] = downmix


def _track_feature_rows(ref: audio_io.TrackRef):
    scfg = _WORKER["scfg"]
    track = audio_io.decode_audio(ref.path, resample=_WORKER["resample"],
                                  downmix=_WORKER["downmix"])
    segments = audio_io.segment_track(track)
    rows = []
    for seg in segments:
        out = scatter(seg.samples, scfg)
        rows.append(flatten(out, _WORKER["layers"]).values.astype(np.float32))
    return np.stack(rows)


def compute_features(dataset: audio_io.Dataset, cfg: RunConfig,
                     family: str | None = None):
    """Flattened full-depth features for every segment, cached on disk.

    Returns (X float32 memmap (n_segments, d), segment_tracks, track_labels,
    layout).  The cache key combines the scattering config hash with the
    corpus hash, so any change to either recomputes.
    """
    scfg = cfg.scattering_config(family)
    layer_set = cumulative_layers(cfg.layers)
    cache = cfg.cache_dir()
    cache.mkdir(parents=True, exist_ok=True)
    key = f"{config_hash(scfg)}_{corpus_hash(dataset)}"
    x_path = cache / f"features_{key}.npy"
    meta_path = cache / f"features_{key}.json"

    labels = np.array(dataset.labels())
    n_tracks = len(dataset)
    seg_tracks = np.repeat(np.arange(n_tracks), audio_io.NUM_SEGMENTS)

    if x_path.exists() and meta_path.exists():
        meta = json.loads(meta_path.read_text())
        layout = FeatureLayout({int(k): tuple(v) for k, v in meta["shapes"].items()})
        X = np.load(x_path, mmap_mode="r")
        log.info("feature cache hit: %s", x_path)
        return X, seg_tracks, labels, layout

    probe = scatter(np.zeros(audio_io.SEGMENT_LEN, dtype=scfg.dtype), scfg)
    layout = FeatureLayout.from_output(probe, layer_set)
    d = len(layout)
    X = np.lib.format.open_memmap(x_path, mode="w+", dtype=np.float32,
                                  shape=(n_tracks * audio_io.NUM_SEGMENTS, d))
    init_args = (scfg, layer_set, cfg.resample, cfg.downmix)
    log.info("scattering %d tracks (%d segments, %d features) with %d job(s)",
             n_tracks, len(seg_tracks), d, cfg.jobs)
    if cfg.jobs > 1:
        with multiprocessing.Pool(cfg.jobs, initializer=_init_worker,
                                  initargs=init_args) as pool:
            for i, rows in enumerate(pool.imap(_track_feature_rows, dataset.tracks,
                                               chunksize=1)):
                X[i * audio_io.NUM_SEGMENTS:(i + 1) * audio_io.NUM_SEGMENTS] = rows
                if (i + 1) % 25 == 0:
                    log.info("  %d/%d tracks", i + 1, n_tracks)
    else:
        _init_worker(*init_args)
        for i, ref in enumerate(dataset.tracks):
            X[i * audio_io.NUM_SEGMENTS:(i + 1) * audio_io.NUM_SEGMENTS] = \
                _track_feature_rows(ref)
            if (i + 1) % 25 == 0:
                log.info("  %d/%d tracks", i + 1, n_tracks)
    X.flush()
    meta_path.write_text(json.dumps(
        {"shapes": {str(m): list(s) for m, s in layout.layer_shapes.items()}}))
    return np.load(x_path, mmap_mode="r"), seg_tracks, labels, layout


# ---------------------------------------------------------------------------
# commands


def cmd_filters(cfg: RunConfig, input_len: int, want_csv: bool = False) -> int:
    scfg = cfg.scattering_config()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    lengths = _chain_lengths(input_len, scfg)
    for m in range(scfg.num_layers):
        bank = build_filter_bank(scfg.family, lengths[m], scfg.qualities[m],
                                 scfg.j_maxes[m], scfg.gmw, scfg.peak_fraction)
        base = cfg.out_dir / f"bank_layer{m + 1}_{scfg.family.value}"
        container.write_filter_bank(bank, base.with_suffix(".gmwb"))
        if want_csv:
            container.bank_to_csv(bank, base.with_suffix(".csv"))
        print(f"layer {m + 1}: {bank.num_filters} filters on N={bank.signal_len} "
              f"-> {base.with_suffix('.gmwb')}")
    return EXIT_OK


def _scatter_track(track: audio_io.Track, cfg: RunConfig, out_dir: Path,
                   want_csv: bool) -> None:
    scfg = cfg.scattering_config()
    stem = Path(track.id).name.replace(".", "_") if track.id else "input"
    for seg in audio_io.segment_track(track):
        out = scatter(seg.samples, scfg)
        base = out_dir / f"{stem}_seg{seg.index:02d}"
        container.write_scattering(out, base.with_suffix(".stnc"))
        if want_csv:
            container.scattering_to_csv(out, base.with_suffix(".csv"))


def cmd_scatter(cfg: RunConfig, args) -> int:
    out_dir = cfg.out_dir / "scatter"
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.input is not None:
        track = audio_io.decode_audio(args.input, resample=cfg.resample,
                                      downmix=cfg.downmix)
        _scatter_track(track, cfg, out_dir, args.csv)
        print(f"wrote {audio_io.NUM_SEGMENTS} segment outputs to {out_dir}")
        return EXIT_OK
    if cfg.data_root is None:
        raise ConfigError("scatter needs --input or --data-root")
    dataset = audio_io.load_corpus(cfg.data_root)
    if len(dataset) == 0:
        raise DataError(f"{cfg.data_root}: no audio files found")
    for ref in dataset.tracks:
        _scatter_track(dataset.decode(ref, resample=cfg.resample,
                                      downmix=cfg.downmix), cfg, out_dir, args.csv)
    print(f"scattered {len(dataset)} tracks into {out_dir}")
    return EXIT_OK


def cmd_manifest(args) -> int:
    dataset = audio_io.load_corpus(args.data_root)
    if len(dataset) == 0:
        raise DataError(f"{args.data_root}: no audio files found")
    audio_io.write_manifest(dataset, args.out)
    print(f"wrote manifest for {len(dataset)} tracks to {args.out}")
    return EXIT_OK


def _classifier_factory(cfg: RunConfig, name: str):
    if name == "svm":
        return svm_factory(C=cfg.svm_c)
    if name == "glmnet":
        return glmnet_factory()
    raise ConfigError(f"unknown classifier {name!r}")


def _layer_slice_matrix(X, layout: FeatureLayout, depth: int):
    """Cumulative layers 0..depth occupy a contiguous column prefix."""
    sl = layout.layer_slice(depth)
    return np.asarray(X[:, :sl.stop])


def run_experiment(dataset, cfg: RunConfig, family: str, classifier: str,
                   depth: int):
    X, seg_tracks, labels, layout = compute_features(dataset, cfg, family)
    Xd = _layer_slice_matrix(X, layout, depth)
    report = cross_validate(Xd, seg_tracks, labels,
                            _classifier_factory(cfg, classifier),
                            repeats=cfg.repeats, seed=cfg.seed,
                            pca_k=cfg.pca_k, zscore=cfg.zscore)
    return report, layout


def _save_final_model(dataset, cfg: RunConfig, model_dir: Path) -> None:
    """Full-corpus PCA + lasso-GLM fit at the configured depth, serialized."""
    X, seg_tracks, labels, layout = compute_features(dataset, cfg)
    Xd = np.asarray(_layer_slice_matrix(X, layout, cfg.layers), dtype=np.float64)
    k = min(cfg.pca_k, min(Xd.shape))
    pca = fit_pca(Xd, k, seed=cfg.seed)
    Z = pca.project(Xd)
    glm = glmnet_train(Z, labels[seg_tracks], seed=cfg.seed)
    model_dir.mkdir(parents=True, exist_ok=True)
    container.write_pca(pca, model_dir / "pca.pcam")
    container.write_glm(glm.classes, glm.intercept, glm.coef, glm.lambda_,
                        glm.scale_mu, glm.scale_sd, model_dir / "glm.glmc")
    shapes = {str(m): list(s) for m, s in layout.layer_shapes.items()}
    (model_dir / "layout.json").write_text(json.dumps({"shapes": shapes}))
    print(f"saved PCA (k={k}) and lasso-GLM model to {model_dir}")


def cmd_train_eval(cfg: RunConfig, args) -> int:
    if cfg.data_root is None:
        raise ConfigError("train-eval needs --data-root")
    dataset = audio_io.load_corpus(cfg.data_root)
    if len(dataset) == 0:
        raise DataError(f"{cfg.data_root}: no audio files found")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    if args.full_table:
        columns = [("gmw", "glmnet"), ("gmw", "svm"), ("morlet", "svm")]
        table = {}
        for depth in range(1, cfg.layers + 1):
            for family, classifier in columns:
                report, _ = run_experiment(dataset, cfg, family, classifier, depth)
                table[(depth, family, classifier)] = report.mean_accuracy
                log.info("layer %d %s-%s: %.4f", depth, family, classifier,
                         report.mean_accuracy)
        _write_summary_table(table, cfg, columns)
        print((cfg.out_dir / "accuracy_table.txt").read_text())
    else:
        report, _ = run_experiment(dataset, cfg, cfg.family, cfg.classifier,
                                   cfg.layers)
        report.to_csv(cfg.out_dir / "accuracy.csv")
        report.confusion_to_csv(cfg.out_dir / "confusion.csv")
        report.per_genre_to_csv(cfg.out_dir / "per_genre.csv")
        print(f"mean accuracy ({cfg.family}-{cfg.classifier}, layers 0..{cfg.layers}): "
              f"{report.mean_accuracy:.4%}")

    if args.save_model:
        _save_final_model(dataset, cfg, cfg.out_dir / "model")
    return EXIT_OK


def _write_summary_table(table: dict, cfg: RunConfig, columns) -> None:
    head = ["layer"] + [f"{f}-{c}" for f, c in columns]
    lines_csv = [",".join(head)]
    width = max(len(h) for h in head) + 2
    lines_txt = ["".join(h.ljust(width) for h in head)]
    for depth in range(1, cfg.layers + 1):
        row = [str(depth)]
        for family, classifier in columns:
            row.append(f"{table[(depth, family, classifier)] * 100:.4f}%")
        lines_csv.append(",".join(row))
        lines_txt.append("".join(v.ljust(width) for v in row))
    (cfg.out_dir / "accuracy_table.csv").write_text("\n".join(lines_csv) + "\n")
    (cfg.out_dir / "accuracy_table.txt").write_text("\n".join(lines_txt) + "\n")


def cmd_significance(args) -> int:
    model_dir = args.model_dir
    for name in ("pca.pcam", "glm.glmc", "layout.json"):
        if not (model_dir / name).exists():
            raise DataError(f"{model_dir / name}: missing model file")
    pca = container.read_pca(model_dir / "pca.pcam")
    classes, intercept, coef, lambda_, mu, sd = container.read_glm(model_dir / "glm.glmc")
    meta = json.loads((model_dir / "layout.json").read_text())
    layout = FeatureLayout({int(k): tuple(v) for k, v in meta["shapes"].items()})
    if 3 not in layout.layer_shapes or len(layout.layer_shapes[3]) != 4:
        raise DataError(f"{model_dir}: significance maps need a depth-3 model")
    args.out_dir.mkdir(parents=True, exist_ok=True)
    grids = []
    for i, genre in enumerate(classes):
        smap = significance_scores(coef[i], pca, layout, genre=genre)
        out = args.out_dir / f"significance_{genre}.csv"
        grids.append(export_heatmap(smap, out, clamp_lo=args.clamp))
        note = " (degenerate)" if smap.degenerate else ""
        print(f"{genre}: wrote {out}{note}")
    # aggregate file: per-genre grids stacked top to bottom
    rows = grids[0].shape[0]
    header = "all-genre significance grids, stacked top to bottom\n" + "\n".join(
        f"rows [{i * rows}, {(i + 1) * rows}): {g}" for i, g in enumerate(classes))
    np.savetxt(args.out_dir / "significance_all.csv", np.vstack(grids),
               delimiter=",", header=header, comments="# ")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "filters":
            cfg = config_from_args(args)
            return cmd_filters(cfg, args.input_len, args.csv)
        if args.command == "scatter":
            return cmd_scatter(config_from_args(args), args)
        if args.command == "manifest":
            return cmd_manifest(args)
        if args.command == "train-eval":
            return cmd_train_eval(config_from_args(args), args)
        if args.command == "significance":
            return cmd_significance(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
