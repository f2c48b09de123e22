from marshmallow import ValidationError, fields


class EnumValue(fields.Field):
    """Serialize an ``aenum`` member by its primary value."""

    def __init__(self, enum, **kwargs):
        self.enum = enum
        super().__init__(**kwargs)

    def _serialize(self, value, attr, obj, **kwargs):
        return None if value is None else value.value

    def _deserialize(self, value, attr, data, **kwargs):
        try:
            return self.enum(value)
        except ValueError:
            raise ValidationError(f"unknown {self.enum.__name__}: {value!r}") from None


class Pair(fields.Tuple):
    """Two positive integers, e.g. (rows, cols)."""

    def __init__(self, **kwargs):
        super().__init__(
            (fields.Integer(strict=True), fields.Integer(strict=True)), **kwargs
        )
