"""Exception types shared across the package."""


class InterkeyError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(InterkeyError):
    """Invalid or inconsistent configuration values."""


class DegenerateIntersectionError(InterkeyError):
    """Branch segmentation found fewer than two branches; not a usable junction."""


class PatternBoundsError(ConfigError):
    """Sampling pattern does not fit inside the imprint from the refined point."""


class DatabaseFormatError(InterkeyError):
    """Descriptor database bytes are malformed, truncated, or wrong version."""


class FingerprintMismatchError(InterkeyError):
    """Query configuration does not match the database fingerprint."""
