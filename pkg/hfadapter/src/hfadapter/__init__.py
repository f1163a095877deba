"""Real-model backend speaking the dialect-forge wire protocol.

The adapter is a standalone executable: the pipeline package talks to it
over stdin/stdout pipes only, so nothing here imports dialectforge.
"""

from .protocol import (
    END_LINE,
    AsrJob,
    ProtocolError,
    TtsJob,
    asr_response_line,
    error_response_line,
    parse_request_line,
    parse_response_line,
    tts_response_line,
)
from .serve import AdapterConfig, serve

__all__ = [
    "END_LINE",
    "AsrJob",
    "TtsJob",
    "ProtocolError",
    "AdapterConfig",
    "asr_response_line",
    "tts_response_line",
    "error_response_line",
    "parse_request_line",
    "parse_response_line",
    "serve",
]
