"""Batch evaluation helpers and the experiment drivers behind the CLI.

The per-frame executors in .network are the reference semantics; the batch
evaluators here compute the same quantities vectorized over frames so that
whole test sets stay cheap.  Drivers write plain CSV plus a JSON manifest
and return their results for in-process use.
"""

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .costs import (DEFAULT_ENERGY_TABLE, LayerActivity, energy, flops_dense,
                    flops_rounding, flops_sigma_delta, flops_sparse,
                    write_report_csv)
from .data import gen_random_network, gen_random_stream, load_idx, temporal_reshuffle
from .kernels import OpLedger
from .network import (SigmaDeltaRuntime, TemporalDiffRuntime, apply_activation,
                      forward_original, forward_rounding, forward_sigma_delta,
                      forward_temporal_diff, load_network)
from .quantizers import round_half_away
from .scale_opt import DivergenceError, TradeoffConfig, error_loss, optimize

__all__ = [
    "dense_batch",
    "rounding_batch",
    "sigma_delta_stream",
    "classification_error",
    "equivalence_check",
    "random_net_experiment",
    "mnist_experiment",
    "find_mnist_files",
    "worker_count",
]


def worker_count(n_tasks, requested=None):
    """Worker count for sweep parallelism; SIGDEL_THREADS is a hard cap."""
    cap = requested if requested is not None else (os.cpu_count() or 1)
    env = os.environ.get("SIGDEL_THREADS")
    if env:
        cap = min(int(cap), int(env))
    return max(1, min(int(cap), n_tasks))


def dense_batch(net, X, activity=None):
    """Vectorized forward_original over the rows of X."""
    a = np.asarray(X, dtype=np.float64)
    nonzero = []
    for layer in net.layers:
        nonzero.append(np.count_nonzero(a, axis=1))
        a = apply_activation(layer.activation, a @ layer.weights + layer.bias)
    if activity is not None:
        for frame in np.stack(nonzero, axis=1):
            activity.record_frame(nonzero=frame)
    return a


def rounding_batch(net, X, activity=None):
    """Vectorized forward_rounding over the rows of X.

    Same math as the event-driven executor (integer grid values times
    weights/k); only the summation order differs.
    """
    a = np.asarray(X, dtype=np.float64)
    l1s = []
    for layer in net.layers:
        s = round_half_away(a * np.asarray(layer.scale))
        l1s.append(np.abs(s).sum(axis=1).astype(np.int64))
        u = s @ layer.scaled_weights() + layer.bias
        a = apply_activation(layer.activation, u)
    if activity is not None:
        for frame in np.stack(l1s, axis=1):
            activity.record_frame(l1=frame)
    return a


def sigma_delta_stream(net, frames, ledger=None, activity=None, runtime=None):
    """Run the event-driven network over an ordered set of frames.

    Returns the per-frame outputs; state is fresh unless a runtime is
    passed in.
    """
    frames = np.asarray(getattr(frames, "frames", frames), dtype=np.float64)
    rt = runtime if runtime is not None else SigmaDeltaRuntime(net)
    out = np.empty((frames.shape[0], net.output_dim))
    for t, x in enumerate(frames):
        out[t] = rt.step(x, ledger=ledger, activity=activity)
    return out


def classification_error(outputs, labels):
    """Percent of frames whose argmax disagrees with the label."""
    preds = np.argmax(outputs, axis=1)
    return 100.0 * float(np.mean(preds != np.asarray(labels)))


def _write_manifest(out_dir, config):
    doc = {"config": config, "version": __version__,
           "numpy": np.__version__}
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(doc, f, sort_keys=True, indent=2, default=str)
        f.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v
                        for v in row])


# ---------------------------------------------------------------------------
# Equivalence check

def equivalence_check(net=None, frames=None, seed=0, n_frames=500,
                      smoothness=0.5, sd_tol=1e-4, td_tol=1e-6):
    """Run all four executors over one stream and compare them frame by frame.

    Reports the worst deviation of the sigma-delta network from the
    rounding network (relative), of the temporal-difference network from
    the original (absolute), and the op totals of each executor.
    """
    rng = np.random.default_rng(seed)
    if net is None:
        net = gen_random_network(rng, dims=(24, 32, 32, 16),
                                 factors=(1.0, 1.0, 1.0))
        net = net.with_scales([2.0, 1.0, 0.5])
    if frames is None:
        frames = gen_random_stream(rng, n_frames, net.input_dim,
                                   smoothness).frames
    frames = np.asarray(getattr(frames, "frames", frames), dtype=np.float64)

    led_orig, led_round, led_sd = OpLedger(), OpLedger(), OpLedger()
    td_rt = TemporalDiffRuntime(net)
    sd_rt = SigmaDeltaRuntime(net)
    max_sd_rel = 0.0
    max_td_abs = 0.0
    for x in frames:
        y_orig = forward_original(net, x, ledger=led_orig)
        y_td = forward_temporal_diff(net, td_rt, x)
        y_round = forward_rounding(net, x, ledger=led_round)
        y_sd = forward_sigma_delta(net, sd_rt, x, ledger=led_sd)
        # relative to the frame's output magnitude, floored so all-zero
        # output frames compare float dust against a fixed small scale
        denom = max(float(np.max(np.abs(y_round))), 1e-6)
        max_sd_rel = max(max_sd_rel, float(np.max(np.abs(y_sd - y_round))) / denom)
        max_td_abs = max(max_td_abs, float(np.max(np.abs(y_td - y_orig))))
    report = {
        "frames": int(frames.shape[0]),
        "max_sigma_delta_vs_rounding_rel": max_sd_rel,
        "max_temporal_diff_vs_original_abs": max_td_abs,
        "sd_tol": sd_tol,
        "td_tol": td_tol,
        "ops_original": led_orig.total_ops,
        "ops_rounding": led_round.total_ops,
        "ops_sigma_delta": led_sd.total_ops,
        "passed": bool(max_sd_rel <= sd_tol and max_td_abs <= td_tol),
    }
    return report


# ---------------------------------------------------------------------------
# Random-network tradeoff experiment

def _eval_rounding_point(net, scales, X, y_true):
    """Mean per-frame (L2 error, rounding flops) of the net at given scales."""
    act = LayerActivity.for_network(net)
    Y = rounding_batch(net.with_scales(scales), X, activity=act)
    err = error_loss(Y, y_true, "l2")
    kflops = flops_rounding(act) / act.frames / 1000.0
    return err, kflops


def random_net_experiment(out_dir, seed=0, lambdas=(1e-8, 1e-7, 1e-6, 1e-5),
                          n_random=1000, train_frames=2048, eval_frames=512,
                          epochs=6, eta=0.02, batch_size=32, surrogate="ste",
                          scale_spread=3.0, threads=None):
    """Scale optimization on the badly-rescaled random network.

    Draws n_random random per-layer rescalings to map the error/computation
    plane, then optimizes scales for each lambda and records the
    trajectories and endpoints.  Writes cloud.csv, trajectories.csv,
    endpoints.csv and a manifest into out_dir.
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    net = gen_random_network(rng)
    train = gen_random_stream(rng, train_frames, net.input_dim).frames
    evalX = gen_random_stream(rng, eval_frames, net.input_dim).frames
    y_true = dense_batch(net, evalX)
    n_layers = len(net.layers)

    cloud = []
    for m in range(n_random):
        kappa = rng.uniform(-scale_spread, scale_spread, n_layers)
        err, kflops = _eval_rounding_point(net, list(np.exp(kappa)), evalX, y_true)
        cloud.append((m, err, kflops))
    _write_csv(os.path.join(out_dir, "cloud.csv"),
               ["sample_id", "error", "kflops"], cloud)

    cfgs = [TradeoffConfig(lam=lam, eta=eta, epochs=epochs,
                           batch_size=batch_size, surrogate=surrogate)
            for lam in lambdas]

    def run_one(i):
        try:
            result = optimize(net, train, cfgs[i],
                              rng=np.random.default_rng([seed, i]))
            return result, None
        except DivergenceError as e:
            return None, e

    results = []
    with ThreadPoolExecutor(worker_count(len(lambdas), threads)) as pool:
        results = list(pool.map(run_one, range(len(lambdas))))

    cloud_pts = np.array([(e, c) for _, e, c in cloud])
    traj_rows, endpoint_rows, endpoints = [], [], []
    for lam, (result, _exc) in zip(lambdas, results):
        if result is None:
            endpoint_rows.append([lam, "", "", "diverged"] + [""] * n_layers)
            endpoints.append({"lambda": lam, "diverged": True})
            continue
        for stp in result.trace:
            traj_rows.append([lam, stp.step, stp.error_loss,
                              stp.round_flops / 1000.0])
        scales = result.scales.scales()
        err, kflops = _eval_rounding_point(net, scales, evalX, y_true)
        dominated = np.mean((cloud_pts[:, 0] <= err) & (cloud_pts[:, 1] <= kflops)
                            & ((cloud_pts[:, 0] < err) | (cloud_pts[:, 1] < kflops)))
        endpoint_rows.append([lam, err, kflops, "ok"] + [float(s) for s in scales])
        endpoints.append({"lambda": lam, "error": err, "kflops": kflops,
                          "dominated_fraction": float(dominated),
                          "scales": [float(s) for s in scales],
                          "diverged": False})
    _write_csv(os.path.join(out_dir, "trajectories.csv"),
               ["lambda", "step", "error", "kflops"], traj_rows)
    _write_csv(os.path.join(out_dir, "endpoints.csv"),
               ["lambda", "error", "kflops", "status"]
               + [f"k_{i + 1}" for i in range(n_layers)], endpoint_rows)
    _write_manifest(out_dir, {
        "experiment": "random-net", "seed": seed, "lambdas": list(lambdas),
        "n_random": n_random, "train_frames": train_frames,
        "eval_frames": eval_frames, "epochs": epochs, "eta": eta,
        "batch_size": batch_size, "surrogate": surrogate,
        "scale_spread": scale_spread,
    })
    return {"cloud": cloud_pts, "endpoints": endpoints}


# ---------------------------------------------------------------------------
# MNIST experiment

_IMAGE_NAMES = {"train": "train-images-idx3-ubyte", "test": "t10k-images-idx3-ubyte"}
_LABEL_NAMES = {"train": "train-labels-idx1-ubyte", "test": "t10k-labels-idx1-ubyte"}


def find_mnist_files(mnist_dir, split):
    """Locate the IDX pair for a split, tolerating .gz and dotted names."""
    pairs = []
    for base in (_IMAGE_NAMES[split], _LABEL_NAMES[split]):
        found = None
        for name in (base, base + ".gz", base.replace("-idx", ".idx"),
                     base.replace("-idx", ".idx") + ".gz"):
            p = os.path.join(mnist_dir, name)
            if os.path.exists(p):
                found = p
                break
        if found is None:
            raise FileNotFoundError(
                f"missing {base}[.gz] under {mnist_dir}")
        pairs.append(found)
    return pairs


def _synthetic_ledger(kind, flops):
    """Ledger equivalent of a flop count: dense passes are half multiplies,
    event-driven passes are all additions."""
    if kind == "dense":
        half = flops // 2
        return OpLedger(float_adds=flops - half, float_mults=half)
    return OpLedger(int_adds=flops)


def _nj(ledger, frames):
    return energy(ledger, DEFAULT_ENERGY_TABLE, "int32") / frames * 1e9


def mnist_experiment(mnist_dir, net_path, out_dir, seed=0, lambdas=None,
                     eta=0.01, epochs=2, batch_size=32, surrogate="ste",
                     buffer_size=1000, threads=None, opt_frames=None,
                     limit_train=None, limit_test=None):
    """Evaluate all three executors across a lambda sweep on both dataset
    orderings, mirroring the results-table layout.

    limit_* truncate the datasets (for smoke tests); opt_frames caps how
    many training frames the scale optimization sees.
    """
    os.makedirs(out_dir, exist_ok=True)
    if lambdas is None:
        lambdas = list(np.logspace(-10, -5, 10))
    rng = np.random.default_rng(seed)

    train = load_idx(*find_mnist_files(mnist_dir, "train"))
    test = load_idx(*find_mnist_files(mnist_dir, "test"))
    if limit_train:
        train = type(train)(train.frames[:limit_train], train.labels[:limit_train])
    if limit_test:
        test = type(test)(test.frames[:limit_test], test.labels[:limit_test])
    net = load_network(net_path)
    if net.input_dim != train.width:
        raise ValueError(
            f"network expects width {net.input_dim}, data has {train.width}")

    datasets = {
        "mnist": {"train": train, "test": test},
        "temporal_mnist": {
            "train": temporal_reshuffle(train, buffer_size, rng),
            "test": temporal_reshuffle(test, buffer_size, rng),
        },
    }

    # The original network's numbers do not depend on the scale setting or
    # the frame order; compute them once.
    dense_flops = flops_dense(net.dims)
    act_sparse = LayerActivity.for_network(net)
    orig_test_out = dense_batch(net, test.frames, activity=act_sparse)
    orig_train_out = dense_batch(net, train.frames)
    orig_err_test = classification_error(orig_test_out, test.labels)
    orig_err_train = classification_error(orig_train_out, train.labels)
    orig_row = {
        "net_type": "original",
        "kflops_dense": dense_flops / 1000.0,
        "kflops_sparse": flops_sparse(act_sparse) / act_sparse.frames / 1000.0,
        "class_error_train": orig_err_train,
        "class_error_test": orig_err_test,
        "energy_nj": _nj(_synthetic_ledger("dense", dense_flops), 1),
    }

    opt_X = train.frames if opt_frames is None else train.frames[:opt_frames]

    def optimize_setting(i, lam):
        cfg = TradeoffConfig(lam=lam, eta=eta, epochs=epochs,
                             batch_size=batch_size, surrogate=surrogate)
        try:
            result = optimize(net, opt_X, cfg, rng=np.random.default_rng([seed, i]))
            return result.scales.scales(), result.trace, None
        except DivergenceError as e:
            return None, e.trace, e

    settings = [("unoptimized", [1.0] * len(net.layers), None)]
    with ThreadPoolExecutor(worker_count(len(lambdas), threads)) as pool:
        sweep = list(pool.map(lambda ix: optimize_setting(*ix),
                              enumerate(lambdas, start=1)))
    for lam, (scales, trace, err) in zip(lambdas, sweep):
        settings.append((f"lambda={lam:.3g}", scales, err))
        rows = [[lam, s.step, s.error_loss, s.comp_loss, s.round_flops / 1000.0]
                + s.scales for s in trace]
        _write_csv(os.path.join(out_dir, f"trace_lambda_{lam:.3g}.csv"),
                   ["lambda", "step", "error_loss", "comp_loss", "kflops"]
                   + [f"k_{i + 1}" for i in range(len(net.layers))], rows)

    report_rows, summary = [], []
    for setting, scales, err in settings:
        if scales is None:  # diverged run: report the failure, keep sweeping
            for ds_name in datasets:
                report_rows.append({"setting": setting, "net_type": "diverged",
                                    "dataset": ds_name})
            summary.append({"setting": setting, "diverged": True})
            continue
        net_k = net.with_scales(scales)

        # Rounding network: stateless, so order does not matter.
        act_round = LayerActivity.for_network(net_k)
        round_test_out = rounding_batch(net_k, test.frames, activity=act_round)
        round_train_out = rounding_batch(net_k, train.frames)
        round_err_test = classification_error(round_test_out, test.labels)
        round_err_train = classification_error(round_train_out, train.labels)
        round_flops = flops_rounding(act_round) / act_round.frames

        entry = {"setting": setting, "scales": [float(np.mean(s)) for s in scales],
                 "round_kflops": round_flops / 1000.0,
                 "round_err_test": round_err_test, "diverged": False}
        for ds_name, splits in datasets.items():
            report_rows.append({"setting": setting, "dataset": ds_name, **orig_row})
            report_rows.append({
                "setting": setting, "net_type": "round", "dataset": ds_name,
                "kflops": round_flops / 1000.0,
                "class_error_train": round_err_train,
                "class_error_test": round_err_test,
                "energy_nj": _nj(_synthetic_ledger("events",
                                                   flops_rounding(act_round)),
                                 act_round.frames),
            })
            act_sd = LayerActivity.for_network(net_k)
            sd_test_out = sigma_delta_stream(net_k, splits["test"],
                                             activity=act_sd)
            sd_train_out = sigma_delta_stream(net_k, splits["train"])
            sd_flops = flops_sigma_delta(act_sd) / act_sd.frames
            report_rows.append({
                "setting": setting, "net_type": "sigma_delta", "dataset": ds_name,
                "kflops": sd_flops / 1000.0,
                "class_error_train": classification_error(
                    sd_train_out, splits["train"].labels),
                "class_error_test": classification_error(
                    sd_test_out, splits["test"].labels),
                "energy_nj": _nj(_synthetic_ledger("events",
                                                   flops_sigma_delta(act_sd)),
                                 act_sd.frames),
            })
            entry[f"sd_kflops_{ds_name}"] = sd_flops / 1000.0
            entry[f"sd_err_test_{ds_name}"] = classification_error(
                sd_test_out, splits["test"].labels)
        summary.append(entry)

    write_report_csv(os.path.join(out_dir, "report.csv"), report_rows)
    _write_manifest(out_dir, {
        "experiment": "mnist", "seed": seed, "lambdas": [float(l) for l in lambdas],
        "eta": eta, "epochs": epochs, "batch_size": batch_size,
        "surrogate": surrogate, "buffer_size": buffer_size,
        "net_path": net_path, "mnist_dir": mnist_dir,
        "opt_frames": opt_frames, "limit_train": limit_train,
        "limit_test": limit_test,
    })
    return {"rows": report_rows, "summary": summary,
            "original": orig_row}
