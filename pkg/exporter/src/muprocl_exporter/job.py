"""Export job description and class-name list ingestion."""

from dataclasses import dataclass, field


class ExportError(RuntimeError):
    """Any failure the exporter cannot recover from (config, transport, model)."""


# prompt rewordings applied locally; "{name}" is replaced by the class name
DEFAULT_TEMPLATES = (
    "a photo of a {name}",
    "a close-up photo of a {name}",
    "a sketch of a {name}",
    "a {name} in a natural scene",
)


@dataclass(frozen=True)
class ExportJob:
    """Everything one export run needs.

    Credentials never live here: `api_key_env` names the environment
    variable holding the bearer token for the chat endpoint.
    """

    class_names: tuple
    encoder_model: str = ""
    chat_endpoint: str = ""
    chat_model: str = ""
    api_key_env: str = "MUPROCL_EXPORT_API_KEY"
    templates: tuple = DEFAULT_TEMPLATES
    disambiguation: bool = True
    expansion: bool = True
    timeout: float = 30.0
    batch_size: int = 32

    def __post_init__(self):
        names = tuple(self.class_names)
        object.__setattr__(self, "class_names", names)
        if not names:
            raise ExportError("class name list is empty")
        for name in names:
            if not name or not name.strip():
                raise ExportError("blank class name")
            if "\t" in name or "\n" in name:
                raise ExportError(f"class name may not contain tabs/newlines: {name!r}")
        if len(set(names)) != len(names):
            raise ExportError("duplicate class names")
        object.__setattr__(self, "templates", tuple(self.templates))
        if self.batch_size < 1:
            raise ExportError("batch_size must be positive")


def read_class_names(path) -> tuple:
    """One class name per line; blank lines and '#' comments are skipped."""
    names = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                names.append(line)
    if not names:
        raise ExportError(f"no class names in {path}")
    return tuple(names)


def read_templates(path) -> tuple:
    """Optional template list, same line rules as class names."""
    return read_class_names(path)
