"""psdm command line: scenario runs, block tests and BER sweeps.

Exit codes: 0 success, 1 decode failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ImpairmentConfig, apply_impairments, gain_at, random_gain_schedule
from .dsp import SampleRateConfig, make_pulse_shape, make_rng
from .gridsim import ScenarioError, builtin_scenario, load_scenario, run_scenario
from .io import meta_lines, write_csv, write_json, write_jsonl
from .link import frame_train, link_trial, random_messages
from .rx import Agc, CarrierLoop, Receiver, ReceiverConfig, TimingLoop
from .rx.receiver import front_end
from .tx import PowerSignalConfig, inject_power_signal, modulate

EXIT_OK, EXIT_DECODE, EXIT_USAGE = 0, 1, 2

SAMPLE_PROBES = ("agc_gain", "phase_err", "phase_acc")
CHIP_PROBES = ("ted_err", "mu", "timing_phase", "corr_metric")

log = logging.getLogger("psdm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _snr_list(text: str) -> list:
    vals = [_float(t) for t in text.replace(" ", "").split(",") if t]
    if not vals:
        raise argparse.ArgumentTypeError("empty SNR list")
    return vals


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _resolve_scenario(arg: str) -> Path:
    p = Path(arg)
    if p.exists() or p.suffix:
        return p
    try:
        return builtin_scenario(arg)
    except FileNotFoundError:
        return p


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not out.is_dir():
        raise UsageError(f"{out} is not a directory")
    return out


def _probe_set(text: str | None, allowed) -> list:
    if text is None or text == "all":
        return list(allowed)
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = sorted(set(names) - set(allowed))
    if bad:
        raise UsageError(f"unknown probe(s) {bad}; choose from {sorted(allowed)}")
    return names


def _emit(out: Path, stem: str, columns: dict, meta: list, fmt: str) -> Path:
    if fmt == "csv":
        return write_csv(out / f"{stem}.csv", columns, meta)
    return write_json(out / f"{stem}.json", {"columns": columns}, meta)


# --- run -----------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        scen = load_scenario(_resolve_scenario(args.scenario), seed=args.seed)
    except ScenarioError as exc:
        print(f"error: scenario {exc}", file=sys.stderr)
        return EXIT_USAGE
    probes = _probe_set(args.probes, SAMPLE_PROBES + CHIP_PROBES)
    out = _out_dir(args.out)
    trace = run_scenario(scen)
    meta = meta_lines(scen.seed, scen.digest(), scenario=scen.name)

    cols = {"time_s": trace.time, "bus_voltage": trace.bus_voltage}
    cols.update({f"i_{name}": cur for name, cur in trace.load_currents.items()})
    cols["i_total"] = trace.total_current
    _emit(out, "trace", cols, meta, args.format)

    for name, diag in trace.diagnostics.items():
        sp = [p for p in probes if p in SAMPLE_PROBES]
        if sp:
            cols = {"time_s": diag.sample_time}
            cols.update({p: diag.sample_probes()[p] for p in sp})
            _emit(out, f"probes_{name}_samples", cols, meta + [f"load: {name}"], args.format)
        cp = [p for p in probes if p in CHIP_PROBES]
        if cp:
            cols = {"time_s": diag.chip_time}
            cols.update({p: diag.chip_probes()[p] for p in cp})
            _emit(out, f"probes_{name}_chips", cols, meta + [f"load: {name}"], args.format)

    by_name = {ld.name: ld for ld in scen.loads}
    records = [{"load": ev.load, "address": by_name[ev.load].address, "time_s": ev.activation_time,
                "sync_time_s": ev.time, "metric": ev.detection.metric,
                "ambiguous": ev.detection.ambiguous, "message": ev.message.to_dict()}
               for ev in trace.detections]
    write_jsonl(out / "messages.jsonl", records, meta)
    summary = trace.summary()
    summary["scenario"] = scen.name
    write_json(out / "summary.json", summary, meta)

    for rec in records:
        m = rec["message"]
        print(f"{rec['sync_time_s'] * 1e3:9.3f} ms  {rec['load']}: addr {m['dest_address']} "
              f"{m['current_setpoint']} mA for {m['duration']} ms")
    print(f"frames decoded {summary['frames_decoded']}/{summary['frames_expected']}, "
          f"BER {summary['ber']:.3g}; outputs in {out}")
    return EXIT_OK if trace.all_decoded else EXIT_DECODE


# --- blocktest -----------------------------------------------------------

def _random_chip_bus(n_chips: int, seed: int, rates: SampleRateConfig):
    rng = make_rng(seed, 3)
    chips = np.where(rng.integers(0, 2, n_chips) > 0, 1.0, -1.0)
    info = modulate(chips, rates, make_pulse_shape(0.5, 8, rates.sps_passband))
    return inject_power_signal(info, PowerSignalConfig())


def _block_agc(args, rates, cfg):
    n = int(round(args.duration * rates.chip_rate))
    bus = _random_chip_bus(n, args.seed, rates)
    sched = random_gain_schedule(args.duration, 0.175, 0.5, 1.25, rng=make_rng(args.seed, 0))
    ch = ImpairmentConfig(gain_schedule=sched, snr_db=args.snr, rng_seed=args.seed)
    bb = front_end(apply_impairments(bus, ch, rates.chip_rate), cfg)
    y, gains = Agc(args.reference, args.alpha).process(bb.samples)
    cols = {"time_s": bb.time, "channel_gain": gain_at(sched, bb.time),
            "input_mag": np.abs(bb.samples), "agc_gain": gains, "output_mag": np.abs(y)}
    settled = np.abs(y[len(y) // 2:])
    return cols, {"gain_schedule": sched, "output_mag_mean_2nd_half": float(np.mean(settled))}


def _carrier_stream(args, rates, cfg, n_chips):
    bus = _random_chip_bus(n_chips, args.seed, rates)
    ch = ImpairmentConfig(phase_offset=args.phase_offset, freq_offset=args.freq_offset,
                          snr_db=args.snr, rng_seed=args.seed)
    return front_end(apply_impairments(bus, ch, rates.chip_rate), cfg)


def _block_carrier(args, rates, cfg):
    bb = _carrier_stream(args, rates, cfg, int(round(args.duration * rates.chip_rate)))
    x = bb.samples / np.sqrt(np.mean(np.abs(bb.samples) ** 2))
    y, err, acc = CarrierLoop(cfg.carrier_gains()).process(x)
    cols = {"time_s": bb.time, "phase_err": err, "phase_acc": acc,
            "out_re": y.real, "out_im": y.imag}
    tail = len(acc) // 2
    return cols, {"phase_offset": args.phase_offset, "freq_offset": args.freq_offset,
                  "final_phase_acc": float(acc[-1]),
                  "mean_abs_err_2nd_half": float(np.mean(np.abs(err[tail:])))}


def _block_timing(args, rates, cfg):
    n = int(round(args.duration * rates.chip_rate))
    bus = _random_chip_bus(n, args.seed, rates)
    ch = ImpairmentConfig(sro_hz=args.sro, snr_db=args.snr, rng_seed=args.seed)
    bb = front_end(apply_impairments(bus, ch, rates.chip_rate), cfg)
    x = bb.samples / np.sqrt(np.mean(np.abs(bb.samples) ** 2))
    # the offset clock also shifts the carrier by fc*sro/chip_rate
    x, _, _ = CarrierLoop(cfg.carrier_gains()).process(x)
    res = TimingLoop(cfg.timing_gains()).process(x)
    t = bb.t0 + res.position / bb.fs
    cols = {"time_s": t, "ted_err": res.ted_error, "mu": res.mu, "timing_phase": res.timing_phase,
            "chip_re": res.chips.real, "chip_im": res.chips.imag}
    skip = min(len(res.chips) // 4, 2000)
    c = res.chips[skip:].real
    amp = float(np.mean(np.abs(c)))
    return cols, {"sro_hz": args.sro, "chips": int(len(res.chips)),
                  "cluster_sigma_rel": float(np.std(np.abs(c)) / amp) if amp else None}


def _block_framesync(args, rates, cfg):
    rng = make_rng(args.seed, 2)
    msgs = random_messages(args.frames, rng)
    train = frame_train(msgs, args.stimulus_code, rates)
    ch = ImpairmentConfig(snr_db=args.snr, rng_seed=args.seed)
    rx_in = apply_impairments(train.bus, ch, rates.chip_rate)
    good, diag = Receiver(args.code, cfg).process(rx_in)
    cols = {"time_s": diag.chip_time, "corr_metric": diag.corr_metric,
            "corr_sharp": diag.corr_sharp}
    return cols, {"receiver_code": args.code, "stimulus_code": args.stimulus_code,
                  "frames_sent": args.frames, "detections": len(good),
                  "rejected_frames": len(diag.failed),
                  "detection_times_s": [d.sync_time for d in good]}


BLOCKS = {"agc": _block_agc, "carrier": _block_carrier, "timing": _block_timing,
          "framesync": _block_framesync}


def cmd_blocktest(args) -> int:
    out = _out_dir(args.out)
    rates = SampleRateConfig()
    cfg = ReceiverConfig(rates=rates)
    cols, summary = BLOCKS[args.block](args, rates, cfg)
    meta = meta_lines(args.seed, None, block=args.block)
    _emit(out, f"{args.block}", cols, meta, args.format)
    write_json(out / f"{args.block}_summary.json", summary, meta)
    for k, v in summary.items():
        if not isinstance(v, list):
            print(f"{k}: {v}")
    return EXIT_OK


# --- ber-sweep -----------------------------------------------------------

def cmd_ber_sweep(args) -> int:
    out = _out_dir(args.out)
    jobs = [(snr, args.seed + k) for snr in args.snr for k in range(args.seeds)]

    def one(job):
        snr, seed = job
        r = link_trial(snr, seed, n_frames=args.frames, code=args.code,
                       impaired=not args.awgn_only)
        return snr, seed, r["bit_errors"], r["bits"], r["decoded"], r["frames"], r["detections"]

    if args.workers > 1:
        with ThreadPoolExecutor(args.workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    results.sort(key=lambda r: (r[0], r[1]))

    snrs = sorted(set(args.snr))
    table = {"snr_db": [], "runs": [], "bit_errors": [], "bits": [], "ber": [],
             "detection_rate": [], "false_detections": []}
    for snr in snrs:
        rows = [r for r in results if r[0] == snr]
        errs, bits = sum(r[2] for r in rows), sum(r[3] for r in rows)
        dec, frames = sum(r[4] for r in rows), sum(r[5] for r in rows)
        table["snr_db"].append(snr)
        table["runs"].append(len(rows))
        table["bit_errors"].append(errs)
        table["bits"].append(bits)
        table["ber"].append(errs / bits if bits else float("nan"))
        table["detection_rate"].append(dec / frames if frames else float("nan"))
        table["false_detections"].append(sum(r[6] - r[4] for r in rows))
        print(f"SNR {snr:7.2f} dB  BER {table['ber'][-1]:.3e}  "
              f"detection rate {table['detection_rate'][-1]:.3f}")
    meta = meta_lines(args.seed, None, frames_per_run=args.frames, code=args.code)
    if args.format == "csv":
        write_csv(out / "ber_sweep.csv", table, meta, first=None)
    else:
        write_json(out / "ber_sweep.json", {"columns": table}, meta)
    return EXIT_OK


# --- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="psdm", description="Energy-packet PLC transceiver simulator")
    p.add_argument("--version", action="version", version=f"psdm {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed_default=0):
        sp.add_argument("--out", default="out", help="output directory (created)")
        sp.add_argument("--seed", type=_seed, default=seed_default)
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    r = sub.add_parser("run", help="simulate a grid scenario")
    r.add_argument("--scenario", required=True,
                   help="scenario JSON path or a built-in name (fig12, loopback)")
    common(r, seed_default=None)
    r.add_argument("--probes", default="all",
                   help="comma list of " + ",".join(SAMPLE_PROBES + CHIP_PROBES))
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("blocktest", help="exercise one receiver block")
    b.add_argument("block", choices=sorted(BLOCKS))
    common(b)
    b.add_argument("--duration", type=_float, default=0.5, help="stimulus length, s")
    b.add_argument("--snr", type=_float, default=math.inf)
    b.add_argument("--alpha", type=_float, default=0.01)
    b.add_argument("--reference", type=_float, default=1.0)
    b.add_argument("--phase-offset", type=_float, default=math.pi / 6)
    b.add_argument("--freq-offset", type=_float, default=0.0)
    b.add_argument("--sro", type=_float, default=2.0)
    b.add_argument("--code", type=int, default=3, choices=range(8), metavar="0..7")
    b.add_argument("--stimulus-code", type=int, default=3, choices=range(8), metavar="0..7")
    b.add_argument("--frames", type=int, default=4)
    b.set_defaults(func=cmd_blocktest)

    s = sub.add_parser("ber-sweep", help="BER and detection rate versus SNR")
    s.add_argument("--snr", type=_snr_list, required=True,
                   help="comma list of SNR values in dB; -inf means noise only")
    s.add_argument("--seeds", type=int, default=10, help="runs per SNR")
    s.add_argument("--frames", type=int, default=10, help="frames per run")
    s.add_argument("--code", type=int, default=3, choices=range(8), metavar="0..7")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--awgn-only", action="store_true",
                   help="skip phase, CFO, SRO and gain impairments")
    common(s)
    s.set_defaults(func=cmd_ber_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seeds", 1) < 1 or getattr(args, "frames", 1) < 1:
        print("error: --seeds and --frames must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
