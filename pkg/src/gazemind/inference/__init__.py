"""Prompt assembly, model calls, response parsing and the session loop."""
from .mock import MockDecision, PredictionRequest, arbitrate, mock_predict
from .prompts import NO_REFERENCES, USER_SLOTS, PromptPair, assemble_prompts, generic_rule, load_template, render_profile_text, render_rag_context
from .response import Prediction, ResponseParseError, parse_response
from .session import (ERROR_LABEL, SessionContext, SessionResult, WindowPrediction, expand_labels,
                      predict_window, read_prediction_log, run_session, write_prediction_log)

__all__ = [
    "ERROR_LABEL", "MockDecision", "NO_REFERENCES", "Prediction", "PredictionRequest", "PromptPair",
    "ResponseParseError", "SessionContext", "SessionResult", "USER_SLOTS", "WindowPrediction", "arbitrate",
    "assemble_prompts", "expand_labels", "generic_rule", "load_template", "mock_predict", "parse_response",
    "predict_window", "read_prediction_log", "render_profile_text", "render_rag_context", "run_session",
    "write_prediction_log",
]
