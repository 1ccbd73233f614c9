"""Exception hierarchy.

``DataError`` covers problems with observed signals or feature streams,
``ModelError`` covers problems with a model definition. The CLI maps them to
exit codes 2 and 3 respectively.
"""


class SeqDamageError(Exception):
    pass


class DataError(SeqDamageError, ValueError):
    pass


class ModelError(SeqDamageError, ValueError):
    pass


class DegenerateChunkError(DataError):
    def __init__(self, index, sensor_id=None):
        self.index = index
        self.sensor_id = sensor_id
        where = f" of sensor {sensor_id}" if sensor_id is not None else ""
        super().__init__(f"chunk {index}{where} has zero variance")


class IllConditionedFitError(DataError):
    pass


class ModelIncompleteError(ModelError):
    def __init__(self, sensor_id, subset):
        self.sensor_id = sensor_id
        self.subset = tuple(sorted(subset))
        label = "{" + ",".join(str(j) for j in self.subset) + "}"
        super().__init__(f"sensor {sensor_id}, subset {label}: no post-change model")


class TreeValidationError(ModelError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
