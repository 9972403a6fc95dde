TOOL_VERSION = "1.0.0"

# Every JSON document written by the CLI carries a "schema" field
SCHEMA_PREFIX = "radialiq"
SCHEMA_VERSION = 1


def schema_tag(kind: str) -> str:
    return f"{SCHEMA_PREFIX}.{kind}/v{SCHEMA_VERSION}"
