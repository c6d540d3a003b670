"""Route travel-time prediction from per-segment medians and means."""

from .network import RoadNetwork, Route, Segment, load_network, dump_network, random_walk_route, route_length_m
from .trips import TimeGrid, Traversal, Trip, TripTable, parse_trips, estimation_window, prediction_window
from .stats import SegmentStatsStore, accumulate, load_store
from .weights import (WeightDataPoint, WeightFunction, WeightLearner, eval_weight,
                      fit_weight_function, generate_datapoint)
from .predict import (AdditiveRoutePredictor, RoutePrediction, choose_route, predict_com, predict_med,
                      predict_smd, predict_smn)
from .evaluation import MetricReport, ProtocolConfig, compute_metrics, run_protocol

__version__ = "0.1.0"

__all__ = [
    "RoadNetwork",
    "Route",
    "Segment",
    "load_network",
    "dump_network",
    "random_walk_route",
    "route_length_m",
    "TimeGrid",
    "Traversal",
    "Trip",
    "TripTable",
    "parse_trips",
    "estimation_window",
    "prediction_window",
    "SegmentStatsStore",
    "accumulate",
    "load_store",
    "WeightDataPoint",
    "WeightFunction",
    "WeightLearner",
    "eval_weight",
    "fit_weight_function",
    "generate_datapoint",
    "AdditiveRoutePredictor",
    "RoutePrediction",
    "choose_route",
    "predict_com",
    "predict_med",
    "predict_smd",
    "predict_smn",
    "MetricReport",
    "ProtocolConfig",
    "compute_metrics",
    "run_protocol",
]
