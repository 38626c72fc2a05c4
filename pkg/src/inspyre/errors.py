class InvalidArgument(ValueError):
    """Raised when an operation's documented precondition is violated."""
