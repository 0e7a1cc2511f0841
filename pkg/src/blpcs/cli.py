"""Command-line front door: key management, file encode/decode, attack and
experiment runners that emit CSV.

Exit codes: 0 success, 2 argument error, 3 file-format error, 4 numeric
guard violation.  Every subcommand is deterministic for a fixed --seed;
wall-clock columns are written as 0.000 unless --timings is given so that
reruns produce byte-identical CSV.
"""

import argparse
import os
import sys
import time

import numpy as np

from .attacks import cpa_break_and_decode, cpa_recover_matrix, EncryptionOracle
from .bases import best_s_term, dct_matrix, rpfrct_matrix, rpfrct2d_basis
from .cipher import (blp_encode, drpe_cs_encode, drpe_masks, keygen, read_key_file,
                     load_measurements, save_measurements, scramble_frequency_encode,
                     scramble_measurements_encode, write_key_file)
from .ensembles import antipodal_scaled_matrix, gaussian_matrix
from .errors import FormatError, GuardError
from .imaging import (ChannelModel, apply_channel, apsnr_db, bcs_in_decode,
                      bcs_in_encode, columnwise_decode, columnwise_encode,
                      load_pgm, make_test_image, psnr, save_pgm)
from .keyrand import derive_stream
from .solvers import ista_bpdn, two_step_decode

__all__ = ["main", "run_fig1", "run_sterm", "run_table", "run_attack"]


def max_workers():
    """Worker cap from BLPCS_THREADS (0 or unset = auto)."""
    raw = os.environ.get("BLPCS_THREADS", "0")
    try:
        val = int(raw)
    except ValueError:
        val = 0
    return val if val > 0 else (os.cpu_count() or 1)


def _write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")


def _rel_error(estimate, truth):
    truth = np.asarray(truth)
    denom = np.linalg.norm(truth)
    if denom == 0:
        return float(np.linalg.norm(estimate))
    return float(np.linalg.norm(np.asarray(estimate) - truth) / denom)


# ---------------------------------------------------------------------------
# experiment: the antipodal non-RIP example

def run_fig1(seed, trials=100, M=500, k=10, K=60, dmax=60):
    """Two-step versus direct recovery for the antipodal-scaled ensemble.

    Column j of the measurement matrix takes values +-d_j; dividing out the
    scales turns the matrix into a Bernoulli one, so recovery after the
    rescale is exact while direct l1 on the raw matrix is not.
    """
    rows = []
    for t in range(trials):
        st = derive_stream(seed, f"fig1/{t}")
        d = st.integers(1, dmax + 1, M).astype(float)
        Phi = antipodal_scaled_matrix(st, K, M, d)
        x = np.zeros(M)
        x[st.subset(M, k)] = 1.0
        y = Phi @ x
        A = Phi / d[None, :]
        xbar, _ = two_step_decode(A, lambda s: s / d, y)
        two_step = _rel_error(xbar, x)
        direct = _rel_error(ista_bpdn(Phi, y).estimate, x)
        rows.append((t, f"{two_step:.6e}", f"{direct:.6e}"))
    return ["trial", "two_step_rel_error", "direct_l1_rel_error"], rows


# ---------------------------------------------------------------------------
# experiment: best s-term quality versus fractional order

def run_sterm(n=128, s_fraction=0.10, orders=(0.92, 0.95, 0.99, 1.0)):
    """Best s-term reconstruction quality relative to the order-1 transform.

    The reference is the same pipeline at orders (1, 1), where the transform
    reduces to blockwise cosine transforms.
    """
    full = make_test_image(512)
    off = 288
    image = full[off:off + n, off:off + n]
    s = int(round(s_fraction * n * n))
    vec = image.flatten(order="F")

    def s_term_psnr(alpha, beta):
        basis = rpfrct2d_basis(n, alpha, beta)
        coeffs = basis.to_coeffs(vec)
        rec = basis.from_coeffs(best_s_term(coeffs, s)).reshape((n, n), order="F")
        return psnr(image, np.clip(rec, 0, 255))

    ref = s_term_psnr(1.0, 1.0)
    rows = []
    for a in orders:
        for b in orders:
            val = s_term_psnr(a, b)
            rows.append((f"{a:g}", f"{b:g}", s, f"{val:.3f}", f"{ref:.3f}",
                         f"{val / ref:.6f}"))
    return ["alpha", "beta", "s", "psnr_db", "ref_psnr_db", "ratio"], rows


# ---------------------------------------------------------------------------
# experiments: image sampling tables

def _image_ratio(img, rec):
    return img.size * 255.0**2 / float(np.sum((img - rec) ** 2))


def run_table(seed, which, trials=10, n=512, srs=(0.1, 0.3, 0.5, 0.7),
              alpha=0.99, beta=0.95, dmax=16, timings=False):
    """APSNR of the scrambled pipeline (and its unscrambled baseline or the
    noisy/lossy channels) on the stand-in image."""
    img = make_test_image(n)
    if which == "table1":
        variants = [("blp-cs", "ideal", 0.0), ("bcs-in", "ideal", 0.0)]
    else:
        variants = [("blp-cs", "ideal", 0.0), ("blp-cs", "awgn", 0.0),
                    ("blp-cs", "packet_loss", 0.1), ("blp-cs", "packet_loss", 0.2),
                    ("blp-cs", "packet_loss", 0.3)]
    rows = []
    for sr in srs:
        keys = [keygen(seed + t, n, sr, alpha, beta, dmax=dmax) for t in range(trials)]
        encoded = {}
        for model, channel, plr in variants:
            t0 = time.monotonic()
            ratios = []
            for t, key in enumerate(keys):
                ck = (t, model)
                if ck not in encoded:
                    encoded[ck] = (columnwise_encode(key, img) if model == "blp-cs"
                                   else bcs_in_encode(key, img))
                pkts = encoded[ck]
                if channel != "ideal":
                    cm = ChannelModel(kind=channel, noise_var=1.0 if channel == "awgn" else 0.0,
                                      plr=plr)
                    cs = derive_stream(seed, f"{which}/chan/{sr}/{channel}/{plr}/{t}")
                    pkts = apply_channel(pkts, cm, cs)
                rec = (columnwise_decode(key, pkts) if model == "blp-cs"
                       else bcs_in_decode(key, pkts))
                ratios.append(_image_ratio(img, rec))
            seconds = time.monotonic() - t0 if timings else 0.0
            rows.append(("standin", f"{sr:g}", model, channel, f"{plr:g}",
                         f"{apsnr_db(ratios):.3f}", f"{seconds:.3f}"))
    return ["image", "sr", "model", "channel", "plr", "apsnr_db", "seconds"], rows


# ---------------------------------------------------------------------------
# experiment: chosen-plaintext attacks

def _attack_class1(st, M, k, K):
    Phi = gaussian_matrix(st, K, M)
    P_K = st.permutation(K)
    C = dct_matrix(M)
    oracle = EncryptionOracle(lambda x: scramble_measurements_encode(Phi, P_K, x), M)
    report = cpa_recover_matrix(oracle, stream=st)
    s_true = np.zeros(M)
    s_true[st.subset(M, k)] = st.gaussian(k)
    x_true = C @ s_true
    est = cpa_break_and_decode(report.recovered_matrix, oracle(x_true), public_basis=C)
    return report.queries_used, _rel_error(est, x_true)

def _attack_class2(st, M, k, K):
    Phi = gaussian_matrix(st, K, M)
    P_M = st.permutation(M)
    C = dct_matrix(M)
    oracle = EncryptionOracle(
        lambda x: scramble_frequency_encode(Phi, P_M, lambda v: C.T @ v, x), M)
    report = cpa_recover_matrix(oracle, stream=st)
    s_true = np.zeros(M)
    s_true[st.subset(M, k)] = st.gaussian(k)
    x_true = C @ s_true
    est = cpa_break_and_decode(report.recovered_matrix, oracle(x_true), public_basis=C)
    return report.queries_used, _rel_error(est, x_true)

def _attack_drpe(st, m=4, M=32, k=3):
    K = m * m
    Phi = gaussian_matrix(st, K, M)
    masks = drpe_masks(st, m)
    oracle = EncryptionOracle(lambda x: drpe_cs_encode(Phi, masks, x), M)
    report = cpa_recover_matrix(oracle, stream=st)
    x_true = np.zeros(M)
    x_true[st.subset(M, k)] = st.gaussian(k)
    est = cpa_break_and_decode(report.recovered_matrix, oracle(x_true))
    return report.queries_used, _rel_error(est, x_true)

def _attack_blp(st, seed_t, M, k, K, dmax):
    key = keygen(seed_t, M, K / M, 0.99, dmax=dmax, mix_count=8)
    oracle = EncryptionOracle(lambda x: blp_encode(key, x), M)
    report = cpa_recover_matrix(oracle, stream=st)
    _, inverse = key.basis()
    s_true = np.zeros(M)
    s_true[st.subset(M, k)] = st.gaussian(k)
    x_true = inverse(s_true)
    public_basis = rpfrct_matrix(M, 1.0)  # order-1 family guess, no key
    est = cpa_break_and_decode(report.recovered_matrix, oracle(x_true),
                               public_basis=public_basis)
    return report.queries_used, _rel_error(est, x_true)


def run_attack(seed, seeds=20, M=256, k=8, K=64, dmax=60, drpe_m=4, drpe_M=32, drpe_k=3):
    """Chosen-plaintext recovery and single-step decode against each target.

    Seeds run independently (parallelized across BLPCS_THREADS workers);
    output order is fixed by the configuration, not completion order.
    """
    specs = [
        ("class1", M, K, k, lambda st, t: _attack_class1(st, M, k, K)),
        ("class2", M, K, k, lambda st, t: _attack_class2(st, M, k, K)),
        ("drpe", drpe_M, drpe_m * drpe_m, drpe_k,
         lambda st, t: _attack_drpe(st, drpe_m, drpe_M, drpe_k)),
        ("blp-cs", M, K, k, lambda st, t: _attack_blp(st, seed + 7000 + t, M, k, K, dmax)),
    ]

    def one(job):
        name, tM, tK, tk, fn, t = job
        st = derive_stream(seed, f"attack/{name}/{t}")
        queries, rel = fn(st, t)
        return (name, t, tM, tK, tk, queries, str(rel < 1e-3).lower(), f"{rel:.6e}")

    jobs = [(name, tM, tK, tk, fn, t)
            for name, tM, tK, tk, fn in specs for t in range(seeds)]
    workers = min(max_workers(), len(jobs))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = [one(job) for job in jobs]
    return ["target", "seed", "M", "K", "k", "queries", "break_success", "rel_error"], rows


# ---------------------------------------------------------------------------
# subcommand drivers

def _cmd_keygen(args):
    key = keygen(seed=args.seed, M=args.n, sr=args.sr, alpha=args.alpha, beta=args.beta,
                 dmax=args.dmax, mix_count=args.mix_count, mix_region=args.mix_region)
    write_key_file(key, args.out)
    return 0

def _cmd_encode(args):
    key = read_key_file(args.key)
    image = load_pgm(args.input)
    packets = (bcs_in_encode(key, image) if args.baseline
               else columnwise_encode(key, image))
    save_measurements(args.out, packets, key.K)
    return 0

def _cmd_decode(args):
    key = read_key_file(args.key)
    packets, K = load_measurements(args.input)
    if K != key.K:
        raise FormatError(f"{args.input}: measurement count {K} does not match key K={key.K}")
    rec = (bcs_in_decode(key, packets) if args.baseline
           else columnwise_decode(key, packets))
    save_pgm(rec, args.out)
    if args.reference:
        ref = load_pgm(args.reference)
        value = psnr(ref, load_pgm(args.out))  # score the 8-bit artifact
        print(f"apsnr_db={'inf' if value == float('inf') else f'{value:.3f}'}")
    return 0

def _cmd_attack(args):
    header, rows = run_attack(args.seed, seeds=args.seeds)
    _write_csv(args.out, header, rows)
    if args.scatter:
        from .attacks import EncryptionOracle, proximity_scatter
        key = keygen(args.seed, 256, 0.25, 0.99, dmax=60, mix_count=8)
        oracle = EncryptionOracle(lambda x: blp_encode(key, x), 256)
        pts = proximity_scatter(oracle, derive_stream(args.seed, "attack/scatter"))
        _write_csv(args.scatter, ["plain_dist", "cipher_dist"],
                   [(f"{a:.6e}", f"{b:.6e}") for a, b in pts])
    return 0

def _cmd_exp(args):
    if args.name == "fig1":
        header, rows = run_fig1(args.seed, trials=args.trials)
    elif args.name == "sterm":
        header, rows = run_sterm()
    elif args.name in ("table1", "table2"):
        header, rows = run_table(args.seed, args.name, trials=args.trials, n=args.n,
                                 alpha=args.alpha, beta=args.beta, dmax=args.dmax,
                                 timings=args.timings)
    elif args.name == "attack":
        header, rows = run_attack(args.seed, seeds=args.seeds)
    else:  # unreachable behind argparse choices
        raise ValueError(f"unknown experiment {args.name!r}")
    _write_csv(args.out, header, rows)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(prog="blpcs",
                                     description="bi-level protected compressive sampling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="derive and write a key file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True, help="signal length / image side (even)")
    p.add_argument("--sr", type=float, required=True, help="sampling rate K/M in (0,1]")
    p.add_argument("--alpha", type=float, default=0.99)
    p.add_argument("--beta", type=float, default=0.95)
    p.add_argument("--dmax", type=int, default=16,
                   help="column-scale spread; 16 suits image quality studies, "
                        "60 the security demonstrations")
    p.add_argument("--mix-count", type=int, default=0)
    p.add_argument("--mix-region", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_keygen)

    p = sub.add_parser("encode", help="encode a PGM image to measurements")
    p.add_argument("--key", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", action="store_true", help="unscrambled baseline pipeline")
    p.set_defaults(fn=_cmd_encode)

    p = sub.add_parser("decode", help="decode measurements to a PGM image")
    p.add_argument("--key", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reference", help="print the PSNR against this image")
    p.add_argument("--baseline", action="store_true")
    p.set_defaults(fn=_cmd_decode)

    p = sub.add_parser("attack", help="run the chosen-plaintext attack demos")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--scatter", help="also write plaintext/ciphertext distance pairs "
                                     "observed under matrix reuse (CSV)")
    p.set_defaults(fn=_cmd_attack)

    p = sub.add_parser("exp", help="write an experiment's results as CSV")
    p.add_argument("name", choices=["fig1", "sterm", "table1", "table2", "attack"])
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--alpha", type=float, default=0.99)
    p.add_argument("--beta", type=float, default=0.95)
    p.add_argument("--dmax", type=int, default=16)
    p.add_argument("--timings", action="store_true",
                   help="record wall time (breaks byte-for-byte determinism)")
    p.set_defaults(fn=_cmd_exp)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except GuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 3


if __name__ == "__main__":
    sys.exit(main())
