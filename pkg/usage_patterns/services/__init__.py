from .trip_ingest import TripRecord, FilterPolicy, parse_trips, filter_trips, trip_speed
from .profile_builder import Mode, Granularity, AnalysisDataset, build_dataset
from .ca_cluster import ClusterConfig, ClusterModel, fit, majority_period_coloring
from .consensus import ConsensusConfig, run_consensus, select_model_order
from .stats import RankSumResult, ranksum_test, weighted_ranksum_test
from .report import UsageReportGenerator, run_pipeline

__all__ = [
    'TripRecord',
    'FilterPolicy',
    'parse_trips',
    'filter_trips',
    'trip_speed',
    'Mode',
    'Granularity',
    'AnalysisDataset',
    'build_dataset',
    'ClusterConfig',
    'ClusterModel',
    'fit',
    'majority_period_coloring',
    'ConsensusConfig',
    'run_consensus',
    'select_model_order',
    'RankSumResult',
    'ranksum_test',
    'weighted_ranksum_test',
    'UsageReportGenerator',
    'run_pipeline',
]
