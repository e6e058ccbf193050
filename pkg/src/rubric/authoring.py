"""
Offline rubric authoring through the remote channel.

Only task metadata goes out: the task text, the feature names and the
example schema's category text. Never used at inference time.
"""

import logging

from src.base.errors import ParseError, SchemaError
from src.gateway.llm_gateway import Stage
from src.gateway.parsing import extract_json_object
from src.privacy.channel import RemoteChannel
from src.privacy.payload import build_authoring_payload
from src.rubric.schema import DEFAULT_SCHEMA, RubricSchema, schema_from_document

logger = logging.getLogger(__name__)


def author_rubric(channel: RemoteChannel, example: RubricSchema = DEFAULT_SCHEMA) -> RubricSchema:
    payload = build_authoring_payload(example)
    response = channel.send(payload, corpus=set(), stage=Stage.AUTHOR)
    try:
        doc = extract_json_object(response.text)
    except ParseError as e:
        raise SchemaError(f"authored rubric is not JSON: {e.detail}") from e
    schema = schema_from_document(doc)
    logger.info(f"✅ Authored rubric with {len(schema.categories)} categories")
    return schema
