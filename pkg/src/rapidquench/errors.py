from __future__ import annotations


class QuenchError(ValueError):
    """Error carrying a short machine-readable ``code`` (e.g. ``"invalid-n"``)."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
