from marshmallow import (
    Schema,
    ValidationError,
    fields,
    post_load,
    validate,
    validates_schema,
)

from src.models.pixelcnn import (
    CategoricalHead,
    HeadKind,
    LogisticMixtureHead,
    ModelConfig,
)
from src.models.training import TrainConfig
from src.schemas.serializers.fields import EnumValue, Pair
from src.utils import errors


class HeadSchema(Schema):
    kind = EnumValue(HeadKind, required=True)
    num_categories = fields.Integer(validate=validate.Range(2, 256))
    num_components = fields.Integer(validate=validate.Range(min=1))

    @validates_schema
    def validate_head(self, data, **kwargs):
        kind = data.get("kind")
        if kind is HeadKind.CATEGORICAL and "num_components" in data:
            raise ValidationError("categorical head takes num_categories only")
        if kind is HeadKind.LOGISTIC_MIXTURE and "num_categories" in data:
            raise ValidationError("logistic mixture head takes num_components only")

    @post_load
    def make_head(self, data, **kwargs):
        kind = data.pop("kind")
        if kind is HeadKind.CATEGORICAL:
            return CategoricalHead(**data)
        return LogisticMixtureHead(**data)


class ModelConfigSchema(Schema):
    image_h = fields.Integer(validate=validate.Range(min=1))
    image_w = fields.Integer(validate=validate.Range(min=1))
    channels = fields.Integer(validate=validate.Equal(1))
    num_resnet = fields.Integer(validate=validate.Range(min=0))
    num_filters = fields.Integer(validate=validate.Range(min=2))
    receptive_field = Pair()
    dropout_p = fields.Float(validate=validate.Range(0.0, 1.0, max_inclusive=False))
    head = fields.Nested(HeadSchema)

    @post_load
    def make_config(self, data, **kwargs):
        try:
            return ModelConfig(**data)
        except errors.ValidationError as ex:
            raise ValidationError(str(ex)) from ex


class TrainConfigSchema(Schema):
    data_dir = fields.String()
    model = fields.Nested(ModelConfigSchema)
    learning_rate = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    batch_size = fields.Integer(validate=validate.Range(min=1))
    epochs = fields.Integer(validate=validate.Range(min=0))
    max_steps = fields.Integer(allow_none=True, validate=validate.Range(min=0))
    beta1 = fields.Float()
    beta2 = fields.Float()
    eps = fields.Float()
    rng_seed = fields.Integer()
    checkpoint_every = fields.Integer(allow_none=True, validate=validate.Range(min=1))
    checkpoint_dir = fields.String(allow_none=True)
    metrics_path = fields.String(allow_none=True)
    crop = Pair(allow_none=True)
    crop_origin = Pair(allow_none=True)
    max_images = fields.Integer(allow_none=True, validate=validate.Range(min=1))

    @post_load
    def make_config(self, data, **kwargs):
        try:
            return TrainConfig(**data)
        except errors.ValidationError as ex:
            raise ValidationError(str(ex)) from ex
