"""Exception types shared across the package."""


class SchemaError(ValueError):
    """An input file or record does not follow its declared schema."""


class TopicCountMismatch(ValueError):
    """Topic-maps or a profile disagree with the configured number of topics."""


class DuplicateItemError(SchemaError):
    """An item id occurs more than once in a ranked list."""

    def __init__(self, item_id: str):
        super().__init__(f"duplicate item id {item_id!r}")
        self.item_id = item_id
