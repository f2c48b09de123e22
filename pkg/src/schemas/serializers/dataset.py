from marshmallow import Schema, fields, post_load

from src.models.bridge import ManifestRecord, Subtype
from src.schemas.serializers.fields import EnumValue


class ManifestRecordSchema(Schema):
    file = fields.String(required=True)
    subtype = EnumValue(Subtype, required=True)
    seed = fields.Integer(required=True)

    @post_load
    def make_record(self, data, **kwargs):
        return ManifestRecord(**data)
