"""Exception hierarchy.

``UserError`` subclasses map to CLI exit status 1, ``DataError`` subclasses
to exit status 2.
"""


class RemixscapeError(Exception):
    pass


class UserError(RemixscapeError):
    pass


class DataError(RemixscapeError):
    pass


# mesh_io

class UnrecognizedFormat(DataError):
    pass


class TruncatedFile(DataError):
    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class STLSyntaxError(DataError):
    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyMesh(DataError):
    pass


class InvalidMesh(DataError):
    pass


# descriptor

class DegenerateGeometry(DataError):
    pass


class BandwidthExceeded(UserError):
    pass


class CacheFormatError(DataError):
    pass


class CacheMismatch(UserError):
    pass


# similarity / graph / landscape

class IncompatibleDescriptors(UserError):
    pass


class UnknownDesign(UserError):
    pass


class MissingDescriptor(DataError):
    def __init__(self, ids):
        ids = list(ids)
        super().__init__("missing descriptor for: " + ", ".join(ids))
        self.ids = ids


class DuplicateId(DataError):
    def __init__(self, design_id, line=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}duplicate id {design_id!r}")
        self.id = design_id
        self.line = line


class CycleDetected(DataError):
    def __init__(self, cycle):
        super().__init__("inheritance cycle: " + " -> ".join(cycle))
        self.cycle = list(cycle)


class DegenerateGroups(DataError):
    pass


class ProjectionDegenerate(DataError):
    pass


class NotSymmetric(DataError):
    pass


# manifest

class ManifestError(DataError):
    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ManifestSyntax(ManifestError):
    pass


class BadTimestamp(ManifestError):
    pass


class BadValue(ManifestError):
    pass
