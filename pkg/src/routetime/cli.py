"""Command-line front end: synth, accumulate, learn-weights, evaluate, predict."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .evaluation import ProtocolConfig, run_protocol, utc_ts, write_reports
from .network import NetworkFormatError, RouteError, dump_network, load_network, route_length_m
from .predict import additive_predictions, predict_com, predict_smd, predict_smn
from .stats import NoDataError, accumulate, load_store
from .synth import SynthConfig, SynthConfigError, generate_dataset, load_config
from .trips import TimeGrid, TripTable, read_trip_table, write_trip_table
from .weights import WeightLearner, load_weight_function, save_weight_function

log = logging.getLogger("routetime")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_range(text: str) -> tuple[int, int]:
    """``FROM/TO`` ISO-8601 half-open range."""
    try:
        a, b = text.split("/")
        lo, hi = utc_ts(a), utc_ts(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected FROM/TO ISO dates, got {text!r}") from None
    if lo >= hi:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return lo, hi


def int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) <= 0:
        raise argparse.ArgumentTypeError("values must be positive")
    return values


def method_list(text: str) -> list[str]:
    methods = [m.strip().upper() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in ("SMD", "SMN", "COM", "MED")]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad or text!r}")
    return methods


def _read_net(path):
    with open(path, encoding="utf-8") as fh:
        return load_network(fh)


def _read_trips(path, net):
    table, rejects = read_trip_table(path, net)
    log.info("read %d trips from %s (%d rejected)", len(table), path, len(rejects))
    return table


def cmd_synth(args):
    overrides = {} if args.seed is None else {"seed": args.seed}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = load_config(fh, **overrides)
    else:
        cfg = SynthConfig(**overrides)
    net, trips = generate_dataset(cfg)
    with open(args.out_net, "w", encoding="utf-8") as fh:
        dump_network(net, fh)
    with open(args.out_trips, "w", encoding="utf-8") as fh:
        write_trip_table(trips, net, fh)
    print(f"segments\t{len(net)}\ntotal_length_m\t{net.total_length:.1f}\ntrips\t{len(trips)}\n"
          f"traversals\t{trips.seg.size}")
    for name, route in net.marked_routes.items():
        print(f"route\t{name}\t{route.k} segments\t{int(trips.matching_route(net.route_indices(route)).sum())} trips")


def cmd_accumulate(args):
    net = _read_net(args.net)
    trips = _read_trips(args.trips, net)
    origin = utc_ts(args.origin) if args.origin else int(trips.start_ts.min()) if len(trips) else 0
    history = trips
    if args.history_range:
        lo, hi = args.history_range
        history = trips.between(lo, hi).between(None, hi, on="end")
    store = accumulate(trips, TimeGrid(args.delta, origin), net, history, args.lookback)
    with open(args.out, "w", encoding="utf-8") as fh:
        store.export(fh)
    print(f"windows\t{len(store)}\nobservations\t{store.total_count}")


def cmd_learn_weights(args):
    net = _read_net(args.net)
    trips = _read_trips(args.trips, net)
    if args.train_range:
        trips = trips.between(*args.train_range)
    if len(trips) == 0:
        raise ValueError("no trips in the training range")
    learner = WeightLearner(net, args.kmax, args.h, args.n_points, args.grid_step, args.mode,
                            args.bandwidth, random_state=args.seed).fit(trips)
    for k, c in enumerate(learner.counts_, start=1):
        log.info("k=%d points=%d", k, c)
    with open(args.out, "w", encoding="utf-8") as fh:
        save_weight_function(learner.weight_function_, fh)
    wf = learner.weight_function_
    print(f"k_max\t{wf.k_max}\tpoints\t{len(learner.datapoints_)}\tw_2\t{wf.table[min(1, wf.k_max - 1)]:.3f}"
          f"\tw_kmax\t{wf.table[-1]:.3f}")


def cmd_evaluate(args):
    month_tables = not args.fixed_route or args.month_tables
    # route-specific weights are fitted during evaluation; network-wide ones must be supplied
    if "COM" in args.methods and not args.weights and (month_tables or args.route_weights == "network"):
        raise UsageError("--weights is required when COM is evaluated")
    net = _read_net(args.net)
    trips = _read_trips(args.trips, net)
    wf = None
    if args.weights:
        with open(args.weights, encoding="utf-8") as fh:
            wf = load_weight_function(fh)
    config = ProtocolConfig(args.train_range, args.test_range,
                            deltas=args.delta if month_tables else [],
                            methods=args.methods, weights=wf, fixed_route=args.fixed_route,
                            fixed_route_deltas=args.delta, route_weights=args.route_weights,
                            lookback=args.lookback)
    result = run_protocol(trips, net, config)
    log.info("audit: %s", result.audit)
    for path in write_reports(result, args.out_dir, args.methods):
        print(path)
    if args.write_predictions:
        _write_predictions(trips, net, config, wf, args.out_dir)


def _write_predictions(trips: TripTable, net, config: ProtocolConfig, wf, out_dir):
    (tr0, tr1), (te0, te1) = config.train_range, config.test_range
    train = trips.between(tr0, tr1)
    history = train.select(train.end_ts < tr1)
    used = TripTable.concat([train, trips.between(te0, te1)])
    test = trips.between(te0, te1)
    lengths = test.lengths_m(net)
    for delta in config.deltas:
        store = accumulate(used, TimeGrid(delta, tr0), net, history, config.lookback)
        pred = additive_predictions(store, test, config.depth)
        cols = {"SMD": pred.smd, "SMN": pred.smn}
        if wf is not None:
            cols["COM"] = pred.com(wf)
        path = os.path.join(out_dir, f"predictions_delta{delta}.tsv")
        actual = test.totals
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("#trip_id\tk\tmethod\tpredicted_s\tactual_s\tlength_m\tprovenance\n")
            for i in range(len(test)):
                fc = pred.flag_counts[i]
                prov = f"fresh={fc[0]},stale={fc[1]},historical={fc[2]}"
                for m, v in cols.items():
                    fh.write(f"{test.trip_ids[i]}\t{pred.k[i]}\t{m}\t{v[i]:.3f}\t{actual[i]:.3f}\t"
                             f"{lengths[i]:.1f}\t{prov}\n")
        print(path)


def cmd_predict(args):
    net = _read_net(args.net)
    with open(args.stats, encoding="utf-8") as fh:
        store = load_store(fh, list(net.ids))
    route = net.check_route([s.strip() for s in args.route.split(",") if s.strip()])
    # window indices in the file only make sense on the grid they were built with
    window = store.grid.window_of(args.at) - 1
    window = window if window >= 0 else None
    preds = [predict_smd(route, store, window), predict_smn(route, store, window)]
    if args.weights:
        with open(args.weights, encoding="utf-8") as fh:
            preds.insert(0, predict_com(route, store, window, load_weight_function(fh)))
    length = route_length_m(net, route)
    print("#trip_id\tk\tmethod\tpredicted_s\tactual_s\tlength_m\tprovenance")
    for p in preds:
        print(f"{args.trip_id}\t{p.k}\t{p.method}\t{p.predicted_time:.3f}\tnan\t{length:.1f}\t{p.provenance_label}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="routetime", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log data access to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic network and trip file")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out-net", required=True)
    p.add_argument("--out-trips", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("accumulate", help="build the per-segment window statistics file")
    p.add_argument("--net", required=True)
    p.add_argument("--trips", required=True)
    p.add_argument("--delta", type=int, default=60, help="window width in minutes")
    p.add_argument("--origin", help="ISO timestamp aligning windows (default: first trip start)")
    p.add_argument("--history-range", type=parse_range, help="trips feeding the historical fallback")
    p.add_argument("--lookback", type=int, default=6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_accumulate)

    p = sub.add_parser("learn-weights", help="learn w_k from semi-synthetic routes")
    p.add_argument("--net", required=True)
    p.add_argument("--trips", required=True)
    p.add_argument("--train-range", type=parse_range)
    p.add_argument("--kmax", type=int, default=30)
    p.add_argument("--h", type=int, default=1000)
    p.add_argument("--n-points", type=int, default=10_000)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--mode", choices=("table", "smoothed"), default="smoothed")
    p.add_argument("--bandwidth", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn_weights)

    p = sub.add_parser("evaluate", help="run the train/test protocol and write .dat reports")
    p.add_argument("--net", required=True)
    p.add_argument("--trips", required=True)
    p.add_argument("--weights")
    p.add_argument("--train-range", type=parse_range, required=True)
    p.add_argument("--test-range", type=parse_range, required=True)
    p.add_argument("--delta", type=int_list, default=[10, 20, 30, 40, 50, 60])
    p.add_argument("--methods", type=method_list, default=["SMN", "SMD", "COM"])
    p.add_argument("--fixed-route", help="name of a marked route, e.g. main44")
    p.add_argument("--route-weights", choices=("route", "network"), default="route",
                   help="weights for the fixed-route study")
    p.add_argument("--month-tables", action="store_true",
                   help="also write month tables when --fixed-route is given")
    p.add_argument("--lookback", type=int, default=6)
    p.add_argument("--write-predictions", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="predict travel time for an ad-hoc route")
    p.add_argument("--net", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--weights")
    p.add_argument("--route", required=True, help="comma-separated segment ids")
    p.add_argument("--at", type=int, required=True, help="departure time, epoch seconds")
    p.add_argument("--trip-id", default="adhoc")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"routetime: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SynthConfigError as exc:
        print(f"routetime: config error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NetworkFormatError, RouteError, NoDataError, ValueError, KeyError, OSError) as exc:
        print(f"routetime: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
