# src/utils/errors.py

class FormatError(ValueError):
    """
    A binary or text file does not follow its declared layout
    (bad magic string, truncated payload, wrong header).
    """


class DatasetError(ValueError):
    """
    A dataset manifest is inconsistent with the files it references.
    """


class ConfigError(ValueError):
    """
    Unknown or conflicting configuration keys.
    """
