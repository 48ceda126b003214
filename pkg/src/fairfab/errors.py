"""Error taxonomy shared across the fabric.

The HTTP layers map these onto status codes (404, 409, 410, 403, 422);
everything else raises and catches them directly.
"""


class FabricError(Exception):
    """Base class for all fabric errors."""


class NotFoundError(FabricError):
    """Identifier or resource does not exist."""


class ConflictError(FabricError):
    """Uniqueness or state conflict (duplicate identifier, duplicate target)."""


class GoneError(FabricError):
    """Resource existed but its artifact was withdrawn."""


class ForbiddenError(FabricError):
    """Caller is not the party bound to this resource."""


class IntegrityError(FabricError):
    """Digest or content mismatch against a recorded value."""


class ValidationError(FabricError):
    """Input fails a declared contract (shape, schema, format)."""


class ConfigurationError(FabricError):
    """Invalid or missing configuration value."""
