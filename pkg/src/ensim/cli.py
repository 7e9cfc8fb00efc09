"""Command-line interface: generate / features / compare / sweep / report.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Every artifact embeds the effective configuration and seed, and
reruns of the same command produce byte-identical outputs regardless of the
thread count.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clb import ClbConfig, DegradeConfig, generate_ensemble as clb_ensemble, \
    generate_mixed
from .configs import available_presets, load_config, load_preset
from .core import ConfigError, DataError, Ensemble, EnsimError, \
    NumericalError, quantize_ensemble
from .dataset import load_ensemble, save_ensemble
from .divergence import ComparisonReport
from .features import FEATURE_NAMES, FeatureParams, feature_vector
from .report import compare_ensembles, scalar_stat_table
from .speckle import UssConfig, generate_ensemble as uss_ensemble, \
    generate_mixed_uss
from .stats import snr_stats
from .tissue import TissueConfig, generate_tissue_ensemble


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows, comments: list[str] = ()):
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_svg(path: Path, series: dict[str, tuple], title: str,
               width: int = 640, height: int = 400) -> None:
    """Minimal polyline chart; one line per named (x, y) series."""
    palette = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
               "#8c564b", "#e377c2", "#7f7f7f")
    pad = 40
    xs_all = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys_all = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    for k, (name, (x, y)) in enumerate(sorted(series.items())):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        px = pad + (x - x0) / (x1 - x0) * (width - 2 * pad)
        py = height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)
        points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        color = palette[k % len(palette)]
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.5" points="{points}"/>')
        parts.append(f'<text x="{pad}" y="{35 + 15 * k}" fill="{color}" '
                     f'font-family="sans-serif" font-size="12">{name}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def _resolve_config(args, kind_flag: str, preset_flag: str, sim: str):
    config_path = getattr(args, kind_flag)
    preset = getattr(args, preset_flag)
    if config_path and preset:
        raise ConfigError(f"give either --{kind_flag.replace('_', '-')} or "
                          f"--{preset_flag.replace('_', '-')}, not both")
    if config_path:
        return load_config(config_path)
    if preset:
        return load_preset(sim, preset)
    return None


_SIM_TYPES = {"clb": ClbConfig, "uss": UssConfig, "tissue": TissueConfig}


def _expect_type(cfg, sim: str):
    expected = _SIM_TYPES[sim]
    if not isinstance(cfg, expected):
        raise ConfigError(
            f"config is a {type(cfg).__name__}, but --sim {sim} needs "
            f"{expected.__name__}"
        )
    return cfg


def cmd_generate(args) -> int:
    cfg = _resolve_config(args, "config", "preset", args.sim)
    if cfg is None:
        raise ConfigError(
            f"need --preset or --config; available {args.sim} presets: "
            f"{available_presets(args.sim)}"
        )
    cfg = _expect_type(cfg, args.sim)
    label = args.preset or "custom"

    if args.mixed is not None:
        if args.sim == "uss":
            cfg_b = _resolve_config(args, "config_b", "preset_b", "uss")
            if cfg_b is None:
                raise ConfigError("--mixed for uss needs --preset-b or --config-b")
            ensemble = generate_mixed_uss(
                cfg, cfg_b, args.mixed, args.n, args.seed, args.threads,
                labels=(label, args.preset_b or "custom-b"),
            )
        elif args.sim == "clb":
            dcfg = _resolve_config(args, "degrade_config", "degrade_preset",
                                   "degrade") or load_preset("degrade", "default")
            if not isinstance(dcfg, DegradeConfig):
                raise ConfigError("degrade config file must have model 'degrade'")
            ensemble = generate_mixed(cfg, dcfg, args.mixed, args.n,
                                      args.seed, args.threads)
        else:
            raise ConfigError("--mixed applies to --sim clb or uss only")
    elif args.sim == "clb":
        ensemble = clb_ensemble(cfg, args.n, args.seed, args.threads, label)
    elif args.sim == "uss":
        ensemble = uss_ensemble(cfg, args.n, args.seed, args.threads, label)
    else:
        ensemble = generate_tissue_ensemble(cfg, args.n, args.seed, args.threads)

    if args.quantize:
        ensemble = quantize_ensemble(ensemble, args.top_percentile)
    save_ensemble(ensemble, args.out)
    counts = ensemble.manifest.get("class_counts")
    extra = f" class counts {counts}" if counts else ""
    print(f"wrote {len(ensemble)} images to {args.out}{extra}")
    return 0


def _parse_fat_gland(text):
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError("--fat-gland expects FAT,GLAND,TOLERANCE")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--fat-gland: not numeric: {text!r}") from None


def _load_params(path) -> FeatureParams:
    if path is None:
        return FeatureParams()
    payload = json.loads(Path(path).read_text())
    listy = {k: tuple(v) if isinstance(v, list) else v
             for k, v in payload.items()}
    try:
        return FeatureParams(**listy)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_features(args) -> int:
    ensemble = load_ensemble(args.dataset)
    if args.quantize_first:
        ensemble = quantize_ensemble(ensemble, args.top_percentile)
    params = _load_params(args.params)
    fat_gland = _parse_fat_gland(args.fat_gland)

    from .core import parallel_map
    from .stats import fg_ratio

    def one(pair):
        index, im = pair
        vec = feature_vector(im, params)
        row = [index, ensemble.labels[index]]
        row.extend(getattr(vec, name) for name in FEATURE_NAMES)
        try:
            s = snr_stats(im)
            row.extend([s.mu_i, s.sigma_i, s.snr2, s.n_hat, s.saturation])
        except NumericalError:
            row.extend([None, None, None, None, "degenerate"])
        if fat_gland is not None:
            r = fg_ratio(im, *fat_gland)
            row.extend([r.f_fraction, r.g_fraction, r.log_ratio])
        return row

    rows = parallel_map(one, list(enumerate(ensemble.images)), args.threads)
    header = ["index", "label", *FEATURE_NAMES,
              "mu_i", "sigma_i", "snr2", "n_hat", "saturation"]
    if fat_gland is not None:
        header += ["f_fraction", "g_fraction", "log_fg_ratio"]
    comments = [
        f"ensim features v{__version__}",
        f"dataset: {args.dataset}",
        f"params: {json.dumps(params.to_dict(), sort_keys=True)}",
        f"quantize_first: {args.quantize_first}",
    ]
    if fat_gland is not None:
        comments.append(f"fat_gland: {list(fat_gland)}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, header, rows, comments)
    print(f"wrote {len(rows)} feature rows to {out}")
    return 0


def _truncate(ensemble: Ensemble, max_n: int) -> Ensemble:
    if max_n and len(ensemble) > max_n:
        return ensemble.subset(range(max_n))
    return ensemble


def cmd_compare(args) -> int:
    ens_a = _truncate(load_ensemble(args.dataset_a), args.max_n)
    ens_b = _truncate(load_ensemble(args.dataset_b), args.max_n)
    params = _load_params(args.params)
    fat_gland = _parse_fat_gland(args.fat_gland)
    report, plots = compare_ensembles(
        ens_a, ens_b, feature_params=params, knn_k=args.knn_k,
        grid=args.grid, pdf_bins=args.pdf_bins, seed=args.seed,
        fat_gland=fat_gland, threads=args.threads,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["datasets"] = {"a": str(args.dataset_a), "b": str(args.dataset_b)}
    (out / "report.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n"
    )

    for side in ("a", "b"):
        pdf = plots[f"gray_pdf_{side}"]
        _write_csv(out / f"gray_pdf_{side}.csv", ["bin_center", "density"],
                   zip(pdf.centers, pdf.densities),
                   [f"pooled gray-level PDF of dataset {side}"])
    acf_a, acf_b = plots["acf_a"], plots["acf_b"]
    _write_csv(out / "autocorrelation.csv",
               ["radius_px", "value_a", "value_b"],
               zip(acf_a.radii, acf_a.values, acf_b.values),
               ["radial autocorrelation profiles (peak-normalized)"])
    for family, (proj_a, proj_b) in plots["pca_planes"].items():
        for side, proj in (("a", proj_a), ("b", proj_b)):
            _write_csv(out / f"pca_{family}_{side}.csv", ["pc1", "pc2"],
                       proj, [f"{family} features projected on the shared "
                              f"top-2 principal plane, dataset {side}"])
    for side in ("a", "b"):
        table = plots[f"stats_{side}"]
        names = list(table)
        _write_csv(out / f"stats_{side}.csv", ["index", *names],
                   ([i, *(table[n][i] for n in names)]
                    for i in range(len(table[names[0]]))),
                   [f"per-image statistics of dataset {side}"])
    if args.svg:
        _write_svg(out / "gray_pdf.svg",
                   {"a": (plots["gray_pdf_a"].centers,
                          plots["gray_pdf_a"].densities),
                    "b": (plots["gray_pdf_b"].centers,
                          plots["gray_pdf_b"].densities)},
                   "pooled gray-level PDF")
        _write_svg(out / "autocorrelation.svg",
                   {"a": (acf_a.radii, acf_a.values),
                    "b": (acf_b.radii, acf_b.values)},
                   "radial autocorrelation")
    print(f"wrote comparison report to {out}")
    _print_report(report)
    return 0


def cmd_sweep(args) -> int:
    if args.sweep_preset:
        from importlib import resources
        ref = resources.files("ensim").joinpath("presets").joinpath(
            "sweep").joinpath(f"{args.sweep_preset}.json")
        try:
            payload = json.loads(ref.read_text())
        except FileNotFoundError:
            raise ConfigError(
                f"no sweep preset {args.sweep_preset!r}; available: "
                f"{available_presets('sweep')}"
            ) from None
        args.sim = payload.get("sim", args.sim)
        args.preset = args.preset or payload.get("preset")
        args.param = args.param or payload.get("param")
        if args.values is None and "values" in payload:
            args.values = ",".join(repr(float(v)) for v in payload["values"])
    if args.param is None or args.values is None:
        raise ConfigError("need --param and --values (or a --sweep-preset)")
    if args.sim != "uss":
        raise ConfigError("sweep currently supports --sim uss")
    cfg = _resolve_config(args, "config", "preset", "uss")
    if cfg is None:
        raise ConfigError("need --preset or --config")
    cfg = _expect_type(cfg, "uss")
    valid = {f.name for f in dataclasses.fields(UssConfig)}
    if args.param not in valid:
        raise ConfigError(
            f"unknown parameter {args.param!r}; recognized: {sorted(valid)}"
        )
    try:
        values = [float(v) for v in args.values.split(",") if v]
    except ValueError:
        raise ConfigError(f"--values must be numeric: {args.values!r}") from None
    if not values:
        raise ConfigError("--values is empty")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary_rows = []
    hist_stats = ("snr2", "mu_i", "sigma_i")
    for k, value in enumerate(values):
        if args.param == "image_size":
            value = int(value)
        swept = dataclasses.replace(cfg, **{args.param: value})
        ensemble = uss_ensemble(swept, args.n, args.seed, args.threads,
                                label=f"{args.param}={value:g}")
        table = scalar_stat_table(ensemble, args.threads)
        row = [value]
        for stat in hist_stats:
            finite = table[stat][np.isfinite(table[stat])]
            row.extend([float(finite.mean()), float(finite.std())])
            dens, edges = np.histogram(finite, bins=args.hist_bins,
                                       density=True)
            centers = 0.5 * (edges[:-1] + edges[1:])
            _write_csv(out / f"hist_{stat}_{k:03d}.csv",
                       ["bin_center", "density"], zip(centers, dens),
                       [f"{stat} histogram", f"{args.param} = {value!r}",
                        f"n = {args.n}", f"seed = {args.seed}"])
        summary_rows.append(row)

    header = ["value"]
    for stat in hist_stats:
        header += [f"mean_{stat}", f"std_{stat}"]
    _write_csv(out / "summary.csv", header, summary_rows,
               [f"sweep of {args.param} over {values}",
                f"base config: {json.dumps(cfg.to_dict(), sort_keys=True)}",
                f"n = {args.n} images per value", f"seed = {args.seed}"])
    if args.svg:
        vals = np.array([r[0] for r in summary_rows])
        for j, stat in enumerate(hist_stats):
            means = np.array([r[1 + 2 * j] for r in summary_rows])
            _write_svg(out / f"sweep_{stat}.svg", {stat: (vals, means)},
                       f"mean {stat} vs {args.param}")
    print(f"wrote sweep results ({len(values)} values) to {out}")
    return 0


def _print_report(report: ComparisonReport) -> None:
    floors = report.noise_floors
    print(f"{'metric':<34}{'value':>14}{'floor':>14}{'ratio':>9}")
    for name, value in report.jsd_by_statistic.items():
        floor = floors.get("jsd_by_statistic", {}).get(name)
        ratio = "" if not floor else f"{value / floor:8.1f}"
        floor_s = "" if floor is None else f"{floor:14.5g}"
        print(f"jsd[{name}]".ljust(34) + f"{value:14.5g}{floor_s:>14}{ratio:>9}")
    for name, value in report.tv_by_family.items():
        floor = floors.get("tv_by_family", {}).get(name)
        ratio = "" if not floor else f"{value / floor:8.1f}"
        floor_s = "" if floor is None else f"{floor:14.5g}"
        print(f"tv[{name}]".ljust(34) + f"{value:14.5g}{floor_s:>14}{ratio:>9}")
    floor = floors.get("frechet_features")
    ratio = "" if not floor else f"{report.frechet_features / floor:8.1f}"
    floor_s = "" if floor is None else f"{floor:14.5g}"
    print("frechet_features".ljust(34)
          + f"{report.frechet_features:14.5g}{floor_s:>14}{ratio:>9}")
    worst = report.metadata.get("tv_worst_family")
    if worst:
        print(f"highest-discrepancy family: {worst}")


def cmd_report(args) -> int:
    path = Path(args.report)
    if not path.is_file():
        raise DataError(f"report not found: {path}")
    payload = json.loads(path.read_text())
    report = ComparisonReport.from_dict(payload)
    meta = report.metadata
    print(f"comparison of {meta.get('n_a')} vs {meta.get('n_b')} images")
    _print_report(report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ensim",
        description="Generate stochastic image-model ensembles and compare "
                    "them with texture, speckle, and divergence statistics.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="simulate an image ensemble")
    gen.add_argument("--sim", choices=("clb", "uss", "tissue"), required=True)
    gen.add_argument("--preset")
    gen.add_argument("--config")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--threads", type=int, default=1)
    gen.add_argument("--quantize", action="store_true",
                     help="store as 8-bit with ensemble top-percentile scaling")
    gen.add_argument("--top-percentile", type=float, default=0.01)
    gen.add_argument("--mixed", type=float, default=None,
                     help="fraction of the second class (exact count)")
    gen.add_argument("--preset-b")
    gen.add_argument("--config-b")
    gen.add_argument("--degrade-preset")
    gen.add_argument("--degrade-config")
    gen.set_defaults(func=cmd_generate)

    feat = sub.add_parser("features", help="per-image feature table (CSV)")
    feat.add_argument("dataset")
    feat.add_argument("--out", required=True)
    feat.add_argument("--params", help="JSON file of feature parameters")
    feat.add_argument("--fat-gland", help="FAT,GLAND,TOLERANCE values")
    feat.add_argument("--quantize-first", action="store_true")
    feat.add_argument("--top-percentile", type=float, default=0.01)
    feat.add_argument("--threads", type=int, default=1)
    feat.set_defaults(func=cmd_features)

    comp = sub.add_parser("compare", help="full divergence battery")
    comp.add_argument("dataset_a")
    comp.add_argument("dataset_b")
    comp.add_argument("--out", required=True)
    comp.add_argument("--seed", type=int, default=0)
    comp.add_argument("--knn-k", type=int, default=5)
    comp.add_argument("--grid", type=int, default=64)
    comp.add_argument("--pdf-bins", type=int, default=256)
    comp.add_argument("--params", help="JSON file of feature parameters")
    comp.add_argument("--fat-gland", help="FAT,GLAND,TOLERANCE values")
    comp.add_argument("--max-n", type=int, default=2000,
                      help="cap images per dataset (0 = use all)")
    comp.add_argument("--svg", action="store_true")
    comp.add_argument("--threads", type=int, default=1)
    comp.set_defaults(func=cmd_compare)

    sw = sub.add_parser("sweep", help="one-parameter sweep with summaries")
    sw.add_argument("--sim", default="uss")
    sw.add_argument("--preset")
    sw.add_argument("--config")
    sw.add_argument("--sweep-preset",
                    help="shipped sweep definition, e.g. freq-sweep")
    sw.add_argument("--param")
    sw.add_argument("--values", help="comma-separated numeric values")
    sw.add_argument("--n", type=int, default=100)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--out", required=True)
    sw.add_argument("--hist-bins", type=int, default=64)
    sw.add_argument("--svg", action="store_true")
    sw.add_argument("--threads", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="pretty-print a comparison report")
    rep.add_argument("report")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, EnsimError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
