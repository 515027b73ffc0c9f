class AnalysisError(Exception):
    """Base class for every error raised by the usage pattern services"""


class ConfigurationError(AnalysisError, ValueError):
    """Invalid or missing configuration: schema headers, policies, config keys"""


class DomainError(AnalysisError, ValueError):
    """Input outside the domain of an operation"""


class EmptyDatasetError(DomainError):
    def __init__(self, vehicle_type, mode):
        self.vehicle_type = vehicle_type
        self.mode = mode
        super().__init__(f"No trips available for vehicle '{vehicle_type}' in mode '{mode}'")


class PipelineStageError(AnalysisError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"Stage '{stage}' failed: {cause}")
