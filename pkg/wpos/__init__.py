from .config import Directive, ExperimentConfig, load_config, parse_config
from .channel import ChannelParams, Scenario, generate_scenario, realize
from .features import NormalizationStats, extract_features, toa_rss_features
from .geometry import SceneConfig, ZoneLayout, zone_of
from .pdp import DetectionParams, calibrate_noise, measure_pdp
from .selection import SelectionInputs, SelectionTables, select_feature_size

__all__ = [
    "ChannelParams",
    "DetectionParams",
    "Directive",
    "ExperimentConfig",
    "NormalizationStats",
    "Scenario",
    "SceneConfig",
    "SelectionInputs",
    "SelectionTables",
    "ZoneLayout",
    "calibrate_noise",
    "extract_features",
    "generate_scenario",
    "load_config",
    "measure_pdp",
    "parse_config",
    "realize",
    "select_feature_size",
    "toa_rss_features",
    "zone_of",
]

try:
    from .influx import InfluxTargetV2, InfluxTargetV3, RatePoint, metric_lines
except ImportError:
    pass
else:
    __all__ += [
        "InfluxTargetV2",
        "InfluxTargetV3",
        "RatePoint",
        "metric_lines",
    ]
