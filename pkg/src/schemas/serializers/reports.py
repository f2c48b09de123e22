from marshmallow import Schema, fields


class NllReportSchema(Schema):
    total_nats = fields.Float()
    pixel_count = fields.Integer()
    bits_per_dim = fields.Float()


class EvalReportSchema(Schema):
    overall = fields.Nested(NllReportSchema)
    subtypes = fields.Dict(keys=fields.String(), values=fields.Nested(NllReportSchema))


class RunManifestSchema(Schema):
    checkpoint = fields.List(fields.String())
    temperature = fields.Float()
    fast_mode = fields.Boolean()
    requested = fields.Integer()
    seeds = fields.List(fields.Integer())
    files = fields.List(fields.String())
    checkpoints = fields.List(fields.String())
    nearest_train_l1 = fields.List(fields.Float(allow_none=True))
    asymmetry = fields.List(fields.Float())
