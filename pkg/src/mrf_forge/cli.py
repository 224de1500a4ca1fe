"""Command-line pipelines wiring the library into reproducible runs.

Usage::

    mrf-forge <sim-dict|train|reconstruct|analyze|bench>
              --config <path> [--threads N] [--out DIR]

Each command reads a single JSON config, writes its artifacts into the
output directory, and records a ``manifest.json`` there with the config
digest, input and output file digests, the seed and the wall time.
Identical config and seed reproduce identical output digests. Progress
goes to stderr; stdout carries machine-readable JSON only.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from .dictionary import (
    Dictionary,
    ParamGrid,
    align_rows,
    load_dictionary,
    save_dictionary,
    simulate_dictionary,
)
from .errors import ConfigError, MrfForgeError
from .formats import sha256_bytes, sha256_file
from .matcher import compress_dictionary, cost_report, match_image
from .mrfnet import (
    TrainConfig,
    init_model,
    load_model,
    make_training_set,
    predict_signals,
    save_model,
    train,
)
from .qmaps import save_qmaps, write_qmaps_csv
from .recon import (
    EllipseRegion,
    add_kspace_noise,
    back_project,
    default_regions,
    forward_acquire,
    make_phantom,
    map_error,
    reconstruct_maps,
    sampling_masks,
    synthesize_image,
)
from .sequences import default_sequence, load_schedule
from .spline import filter_report, segment_report
from .subspace import Subspace, compute_subspace

__all__ = ["main", "micro_benchmark"]


def _log(message):
    print(message, file=sys.stderr, flush=True)


# ---------------------------------------------------------------- config

_MISSING = object()

_TYPE_NAMES = {
    bool: "a boolean",
    int: "an integer",
    float: "a number",
    str: "a string",
    list: "a list",
    dict: "an object",
}


def _get(cfg, name, kind, default=_MISSING, prefix=""):
    """Typed config lookup; ConfigError names the (dotted) field."""
    field = prefix + name
    if name not in cfg:
        if default is _MISSING:
            raise ConfigError(field, "required field is missing")
        return default
    value = cfg[name]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(field, f"expected {_TYPE_NAMES[float]}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(field, f"expected {_TYPE_NAMES[int]}")
        return value
    if not isinstance(value, kind):
        raise ConfigError(field, f"expected {_TYPE_NAMES[kind]}")
    return value


def _get_choice(cfg, name, choices, default=_MISSING):
    value = _get(cfg, name, str, default)
    if value not in choices:
        raise ConfigError(name, f"expected one of {sorted(choices)}, got {value!r}")
    return value


def _get_number_pair(cfg, name, default=_MISSING):
    value = _get(cfg, name, list, default)
    if value is default and not isinstance(default, list):
        return value
    if (
        len(value) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise ConfigError(name, "expected a pair of numbers")
    return (float(value[0]), float(value[1]))


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(path, f"cannot read config: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            path, f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(cfg, dict):
        raise ConfigError(path, "config root must be a JSON object")
    return cfg, text


def _sequence_from(cfg, n_frames_default, inputs):
    """SequenceParams from an optional nested 'sequence' object."""
    scfg = _get(cfg, "sequence", dict, default={})
    n_frames = _get(scfg, "n_frames", int, n_frames_default, prefix="sequence.")
    if n_frames < 1:
        raise ConfigError("sequence.n_frames", "must be >= 1")
    overrides = {}
    if "flip_schedule" in scfg:
        path = _get(scfg, "flip_schedule", str, prefix="sequence.")
        try:
            overrides["flip_deg"] = load_schedule(path, n_frames)
        except (OSError, ValueError) as exc:
            raise ConfigError("sequence.flip_schedule", str(exc)) from None
        inputs[path] = sha256_file(path)
    elif "flip_deg" in scfg:
        flip = _get(scfg, "flip_deg", list, prefix="sequence.")
        overrides["flip_deg"] = np.asarray(flip, dtype=np.float64)
    if "tr_schedule" in scfg:
        path = _get(scfg, "tr_schedule", str, prefix="sequence.")
        try:
            overrides["tr_ms"] = load_schedule(path, n_frames)
        except (OSError, ValueError) as exc:
            raise ConfigError("sequence.tr_schedule", str(exc)) from None
        inputs[path] = sha256_file(path)
    elif "tr_ms" in scfg:
        tr = scfg["tr_ms"]
        if isinstance(tr, list):
            overrides["tr_ms"] = np.asarray(tr, dtype=np.float64)
        else:
            overrides["tr_ms"] = np.full(
                n_frames, _get(scfg, "tr_ms", float, prefix="sequence.")
            )
    for key in ("te_ms", "ti_ms", "rf_phase_deg"):
        if key in scfg:
            overrides[key] = _get(scfg, key, float, prefix="sequence.")
    if "max_order" in scfg:
        overrides["max_order"] = _get(scfg, "max_order", int, prefix="sequence.")
    try:
        return default_sequence(n_frames, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError("sequence", str(exc)) from None


def _grid_from(cfg):
    """ParamGrid from 't1'/'t2' objects; defaults reproduce the stock grid."""
    defaults = {
        "t1": {"start": 100.0, "step": 10.0, "count": 391},
        "t2": {"start": 20.0, "step": 2.0, "count": 291},
    }
    axes = {}
    for axis in ("t1", "t2"):
        acfg = _get(cfg, axis, dict, default=defaults[axis])
        prefix = axis + "."
        start = _get(acfg, "start", float, defaults[axis]["start"], prefix)
        step = _get(acfg, "step", float, defaults[axis]["step"], prefix)
        count = _get(acfg, "count", int, defaults[axis]["count"], prefix)
        if start <= 0:
            raise ConfigError(prefix + "start", "must be positive (ms)")
        if step <= 0:
            raise ConfigError(prefix + "step", "must be positive (ms)")
        if count < 1:
            raise ConfigError(prefix + "count", "must be >= 1")
        axes[axis] = (start, step, count)
    return ParamGrid(*axes["t1"], *axes["t2"])


def _load_input_dictionary(cfg, inputs):
    path = _get(cfg, "dictionary", str)
    if not os.path.exists(path):
        raise MrfForgeError(f"dictionary file not found: {path}")
    dictionary = load_dictionary(path)
    inputs[path] = sha256_file(path)
    return dictionary


def _load_input_model(cfg, inputs):
    path = _get(cfg, "model", str)
    if not os.path.exists(path):
        raise MrfForgeError(f"model checkpoint not found: {path}")
    model = load_model(path)
    inputs[path] = sha256_file(path)
    return model


# -------------------------------------------------------------- commands


def _cmd_sim_dict(cfg, out_dir, threads, inputs, outputs):
    inputs_seed = None
    seq = _sequence_from(cfg, 1000, inputs)
    grid = _grid_from(cfg)
    chunk = _get(cfg, "chunk_size", int, 2048)
    if chunk < 1:
        raise ConfigError("chunk_size", "must be >= 1")
    out_name = _get(cfg, "output", str, "dictionary.mrfd")
    _log(f"simulating {grid.n_atoms} atoms over {seq.n_frames} frames")

    last = [0.0]

    def progress(done, total):
        now = time.monotonic()
        if done == total or now - last[0] > 5.0:
            last[0] = now
            _log(f"  {done}/{total} atoms")

    dictionary = simulate_dictionary(
        grid, seq, n_threads=threads, chunk_size=chunk, progress=progress
    )
    out_path = os.path.join(out_dir, out_name)
    save_dictionary(dictionary, out_path)
    outputs[out_name] = sha256_file(out_path)
    return inputs_seed


def _cmd_train(cfg, out_dir, threads, inputs, outputs):
    seed = _get(cfg, "seed", int)
    dictionary = _load_input_dictionary(cfg, inputs)
    s = _get(cfg, "n_components", int, 10)
    hidden = _get(cfg, "hidden", list, [200, 30])
    target_scale = _get_number_pair(cfg, "target_scale", [1000.0, 100.0])
    sub_seed = _get(cfg, "subspace_seed", int, 0)
    snr_range = cfg.get("snr_db_range", [40.0, 60.0])
    if snr_range is not None:
        snr_range = _get_number_pair(cfg, "snr_db_range", [40.0, 60.0])
    try:
        train_cfg = TrainConfig(
            batch_size=_get(cfg, "batch_size", int, 50),
            epochs=_get(cfg, "epochs", int, 30),
            step_size=_get(cfg, "step_size", float, 1e-2),
            decay=_get(cfg, "decay", float, 0.8),
            snr_db_range=snr_range,
            augmentation_factor=_get(cfg, "augmentation_factor", int, 100),
            rng_seed=seed,
            noise_domain=_get_choice(
                cfg, "noise_domain", {"subspace", "signal"}, "subspace"
            ),
        )
    except ValueError as exc:
        raise ConfigError("training", str(exc)) from None

    _log(f"computing {s}-component subspace over {dictionary.n_atoms} atoms")
    sub = compute_subspace(dictionary, s, seed=sub_seed)
    layout = (dictionary.atoms.shape[1], s, *(int(v) for v in hidden), 2)
    try:
        model = init_model(sub, layout, seed=seed, target_scale=target_scale)
    except ValueError as exc:
        raise ConfigError("hidden", str(exc)) from None
    _log(f"building training set: {dictionary.n_atoms} atoms x "
         f"{train_cfg.augmentation_factor} repetitions")
    training = make_training_set(dictionary, sub, train_cfg)
    _log(f"training layout {layout} for {train_cfg.epochs} epochs")
    trained, history = train(model, training, train_cfg)
    for epoch, loss in enumerate(history, 1):
        _log(f"  epoch {epoch}: loss {loss:.6g}")

    out_name = _get(cfg, "output", str, "model.mrfn")
    out_path = os.path.join(out_dir, out_name)
    save_model(trained, out_path)
    outputs[out_name] = sha256_file(out_path)

    csv_name = _get(cfg, "loss_csv", str, "loss_history.csv")
    csv_path = os.path.join(out_dir, csv_name)
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(history, 1):
            fh.write(f"{epoch},{float(loss)!r}\n")
    outputs[csv_name] = sha256_file(csv_path)
    return seed


def _regions_from(cfg, height, width):
    if "regions" not in cfg:
        return default_regions(height, width)
    raw = _get(cfg, "regions", list)
    regions = []
    for i, obj in enumerate(raw):
        if not isinstance(obj, dict):
            raise ConfigError(f"regions[{i}]", "expected an object")
        try:
            regions.append(EllipseRegion.from_dict(obj))
        except KeyError as exc:
            raise ConfigError(f"regions[{i}]", f"missing key {exc.args[0]}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"regions[{i}]", str(exc)) from None
    if not regions:
        raise ConfigError("regions", "need at least one region")
    return regions


def _agreement(dm_maps, net_maps):
    """Voxelwise DM/NET consistency over voxels both engines kept."""
    good = (dm_maps.flags == 0) & (net_maps.flags == 0)
    good &= (dm_maps.t1_map > 0) & (dm_maps.t2_map > 0)
    n = int(good.sum())
    if n == 0:
        return {"n_compared": 0}
    t1_rel = np.abs(net_maps.t1_map[good] - dm_maps.t1_map[good]) / dm_maps.t1_map[good]
    t2_rel = np.abs(net_maps.t2_map[good] - dm_maps.t2_map[good]) / dm_maps.t2_map[good]
    return {
        "n_compared": n,
        "t1_within_10pct": float(np.mean(t1_rel <= 0.10)),
        "t2_within_10pct": float(np.mean(t2_rel <= 0.10)),
        "t1_median_rel_diff": float(np.median(t1_rel)),
        "t2_median_rel_diff": float(np.median(t2_rel)),
    }


def _cmd_reconstruct(cfg, out_dir, threads, inputs, outputs):
    seed = _get(cfg, "seed", int)
    engine = _get_choice(cfg, "engine", {"dm", "net", "both"}, "both")
    dictionary = _load_input_dictionary(cfg, inputs)
    model = None
    if engine in ("net", "both"):
        if "model" not in cfg:
            raise ConfigError("model", "required for the net engine")
        model = _load_input_model(cfg, inputs)
        if model.subspace.n_frames != dictionary.atoms.shape[1]:
            raise MrfForgeError(
                "model and dictionary disagree on the number of frames"
            )

    height = _get(cfg, "height", int, 64)
    width = _get(cfg, "width", int, 64)
    if height < 1 or width < 1:
        raise ConfigError("height", "image dimensions must be >= 1")
    n = height * width
    m = _get(cfg, "m", int, max(1, n // 16))
    if not 1 <= m <= n:
        raise ConfigError("m", f"must be in [1, {n}]")

    n_frames = dictionary.atoms.shape[1]
    seq = _sequence_from(cfg, n_frames, inputs)
    if seq.digest() != dictionary.seq_digest:
        raise MrfForgeError(
            "sequence does not match the dictionary (digest mismatch); "
            "supply the sequence block the dictionary was simulated with"
        )

    if model is not None:
        sub = model.subspace
    else:
        s = _get(cfg, "n_components", int, 10)
        _log(f"computing {s}-component subspace")
        sub = compute_subspace(dictionary, s, seed=_get(cfg, "subspace_seed", int, 0))

    regions = _regions_from(cfg, height, width)
    try:
        phantom = make_phantom(height, width, regions)
    except ValueError as exc:
        raise ConfigError("regions", str(exc)) from None
    _log(f"synthesizing {height}x{width} phantom over {n_frames} frames")
    clean = synthesize_image(phantom, seq)
    masks = sampling_masks((height, width), n_frames, m, seed=seed)
    kspace = forward_acquire(clean, masks, (height, width))
    if "snr_db" in cfg and cfg["snr_db"] is not None:
        kspace = add_kspace_noise(kspace, _get(cfg, "snr_db", float), seed=seed)
    aliased = back_project(kspace)

    threshold = _get(cfg, "degeneracy_threshold", float, 1e-9)
    engines = ("DM", "NET") if engine == "both" else (engine.upper(),)
    cdict = compress_dictionary(dictionary, sub) if "DM" in engines else None
    metrics = {
        "height": height,
        "width": width,
        "n_frames": n_frames,
        "m": m,
        "engines": {},
    }
    results = {}
    write_csv = _get(cfg, "write_csv", bool, False)
    for tag in engines:
        _log(f"reconstructing with engine {tag}")
        maps = reconstruct_maps(
            aliased, (height, width), tag,
            dictionary=dictionary, sub=sub, model=model,
            degeneracy_threshold=threshold, cdict=cdict,
        )
        results[tag] = maps
        name = f"qmaps_{tag.lower()}.mrfq"
        path = os.path.join(out_dir, name)
        save_qmaps(maps, path)
        outputs[name] = sha256_file(path)
        if write_csv:
            csv_name = f"qmaps_{tag.lower()}.csv"
            csv_path = os.path.join(out_dir, csv_name)
            write_qmaps_csv(maps, csv_path)
            outputs[csv_name] = sha256_file(csv_path)
        metrics["engines"][tag] = map_error(maps, phantom)
    if engine == "both":
        metrics["agreement"] = _agreement(results["DM"], results["NET"])

    metrics_name = _get(cfg, "metrics", str, "metrics.json")
    metrics_path = os.path.join(out_dir, metrics_name)
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs[metrics_name] = sha256_file(metrics_path)
    return seed


def _cmd_analyze(cfg, out_dir, threads, inputs, outputs):
    subcommand = _get_choice(cfg, "subcommand", {"segments", "filters"})
    model = _load_input_model(cfg, inputs)
    dictionary = _load_input_dictionary(cfg, inputs)
    if model.subspace.n_frames != dictionary.atoms.shape[1]:
        raise MrfForgeError("model and dictionary disagree on the number of frames")

    if subcommand == "segments":
        seed = _get(cfg, "seed", int)
        k = _get(cfg, "k", int, 12)
        if k < 1:
            raise ConfigError("k", "must be >= 1")
        max_iter = _get(cfg, "max_iter", int, 300)
        out_name = _get(cfg, "output", str, "segments.csv")
        out_path = os.path.join(out_dir, out_name)
        _log(f"clustering {dictionary.n_atoms} slope matrices into {k} segments")
        seg = segment_report(
            model, dictionary, k=k, seed=seed, max_iter=max_iter, csv_path=out_path
        )
        _log(f"k-means inertia {seg.inertia:.6g}")
        outputs[out_name] = sha256_file(out_path)
        return seed

    t1_range = _get_number_pair(cfg, "t1_range")
    t2_range = _get_number_pair(cfg, "t2_range")
    out_name = _get(cfg, "output", str, "filters.csv")
    out_path = os.path.join(out_dir, out_name)
    _log(f"extracting matched filters for T1 {t1_range} ms, T2 {t2_range} ms")
    try:
        filter_report(model, dictionary, t1_range, t2_range, csv_path=out_path)
    except ValueError as exc:
        raise ConfigError("t1_range", str(exc)) from None
    outputs[out_name] = sha256_file(out_path)
    return None


def micro_benchmark(n_frames, s, d, net_layout, n_voxels=10000, seed=0):
    """Wall-clock seconds of batch matching vs network inference.

    Builds a synthetic random dictionary of the requested size and an
    untrained model with the given trainable layout, then times the two
    per-voxel estimators over the same random voxel batch. Dictionary
    compression is precomputed: it is amortized setup for both engines,
    not per-voxel work.
    """
    rng = np.random.default_rng(seed)
    layout = [int(v) for v in net_layout]
    atoms = np.empty((d, n_frames), dtype=np.complex64)
    for lo in range(0, d, 4096):
        hi = min(lo + 4096, d)
        block = rng.standard_normal((hi - lo, n_frames)) + 1j * rng.standard_normal(
            (hi - lo, n_frames)
        )
        aligned, _ = align_rows(block)
        aligned /= np.linalg.norm(aligned, axis=1)[:, None]
        atoms[lo:hi] = aligned.astype(np.complex64)
    grid = ParamGrid(100.0, 1.0, d, 20.0, 1.0, 1)
    dictionary = Dictionary(atoms, grid, bytes(32))

    q, _ = np.linalg.qr(
        rng.standard_normal((n_frames, s)) + 1j * rng.standard_normal((n_frames, s))
    )
    sub = Subspace(q, np.ones(s))
    model = init_model(sub, (n_frames, *layout), seed=seed)
    cdict = compress_dictionary(dictionary, sub)

    voxels = rng.standard_normal((n_voxels, n_frames)) + 1j * rng.standard_normal(
        (n_voxels, n_frames)
    )

    # warm both code paths (BLAS setup, allocations) on a small slice
    match_image(dictionary, sub, voxels[:8], shape=(8, 1), cdict=cdict)
    predict_signals(model, voxels[:8])

    t0 = time.perf_counter()
    match_image(dictionary, sub, voxels, shape=(n_voxels, 1), cdict=cdict)
    dm_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    predict_signals(model, voxels)
    net_s = time.perf_counter() - t0
    return {
        "n_voxels": int(n_voxels),
        "dm_seconds": dm_s,
        "net_seconds": net_s,
        "per_voxel_dm_us": 1e6 * dm_s / n_voxels,
        "per_voxel_net_us": 1e6 * net_s / n_voxels,
        "ratio_wall": dm_s / net_s if net_s > 0 else float("inf"),
    }


def _cmd_bench(cfg, out_dir, threads, inputs, outputs):
    n_frames = _get(cfg, "n_frames", int, 1000)
    s = _get(cfg, "s", int, 10)
    d = _get(cfg, "d", int, 113781)
    layout = _get(cfg, "layout", list, [s, 200, 30, 2])
    try:
        report = cost_report(n_frames, s, d, layout)
    except ValueError as exc:
        raise ConfigError("layout", str(exc)) from None
    result = {"cost": report.as_dict(), "wall_clock": None}

    seed = None
    if _get(cfg, "micro_benchmark", bool, True):
        seed = _get(cfg, "seed", int)
        n_voxels = _get(cfg, "n_voxels", int, 10000)
        if n_voxels < 1:
            raise ConfigError("n_voxels", "must be >= 1")
        _log(f"timing both engines over {n_voxels} synthetic voxels "
             f"(d = {d}, L = {n_frames})")
        result["wall_clock"] = micro_benchmark(
            n_frames, s, d, layout, n_voxels=n_voxels, seed=seed
        )

    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    out_name = _get(cfg, "output", str, "bench.json")
    out_path = os.path.join(out_dir, out_name)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    outputs[out_name] = sha256_file(out_path)
    sys.stdout.write(text)
    return seed


_COMMANDS = {
    "sim-dict": _cmd_sim_dict,
    "train": _cmd_train,
    "reconstruct": _cmd_reconstruct,
    "analyze": _cmd_analyze,
    "bench": _cmd_bench,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mrf-forge",
        description="Fingerprinting dictionary, matching, network and "
                    "reconstruction pipelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap for parallel stages (results unchanged)")
        p.add_argument("--out", default=".", help="output directory")
    return parser


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    if args.threads < 1:
        _log("mrf-forge: --threads must be >= 1")
        return 2

    try:
        cfg, cfg_text = _load_config(args.config)
        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
        inputs, outputs = {}, {}
        started = time.perf_counter()
        seed = _COMMANDS[args.command](cfg, out_dir, args.threads, inputs, outputs)
        wall = time.perf_counter() - started
        manifest = {
            "command": args.command,
            "config_digest": sha256_bytes(cfg_text.encode("utf-8")),
            "inputs": inputs,
            "outputs": outputs,
            "wall_time_s": wall,
            "seed": seed,
            "threads": args.threads,
        }
        manifest_path = os.path.join(out_dir, "manifest.json")
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _log(f"mrf-forge {args.command}: done in {wall:.2f} s")
        return 0
    except ConfigError as exc:
        _log(f"mrf-forge {args.command}: config error: {exc}")
        return 2
    except MrfForgeError as exc:
        _log(f"mrf-forge {args.command}: error: {exc}")
        return 1
    except OSError as exc:
        _log(f"mrf-forge {args.command}: i/o error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
