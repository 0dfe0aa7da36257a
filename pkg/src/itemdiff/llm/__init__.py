"""LLM extraction: prompts, providers, caching, and answer parsing."""

from .cache import RawResponse, ResponseCache, prompt_hash
from .client import request, run_requests
from .parse import (
    FeatureParseError,
    FeatureVector,
    MalformedValueError,
    MissingMarkerError,
    ParseError,
    ValueOutOfRangeError,
    parse_direct,
    parse_features,
)
from .provider import (
    HttpProvider,
    MockProvider,
    ProviderError,
    ProviderPayloadError,
    RateLimitError,
    TransportError,
)
from .schema import OVERALL_KEY, FeatureSchema, Question, builtin_schema, load_schema
from .templates import (
    PromptTemplate,
    PromptError,
    build_direct_prompt,
    build_feature_prompt,
    builtin_template,
    load_template,
)

__all__ = [
    "RawResponse",
    "ResponseCache",
    "prompt_hash",
    "request",
    "run_requests",
    "FeatureParseError",
    "FeatureVector",
    "MalformedValueError",
    "MissingMarkerError",
    "ParseError",
    "ValueOutOfRangeError",
    "parse_direct",
    "parse_features",
    "HttpProvider",
    "MockProvider",
    "ProviderError",
    "ProviderPayloadError",
    "RateLimitError",
    "TransportError",
    "OVERALL_KEY",
    "FeatureSchema",
    "Question",
    "builtin_schema",
    "load_schema",
    "PromptTemplate",
    "PromptError",
    "build_direct_prompt",
    "build_feature_prompt",
    "builtin_template",
    "load_template",
]
