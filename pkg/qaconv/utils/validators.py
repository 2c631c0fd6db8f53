from marshmallow import Schema, ValidationError, fields, validate, validates, validates_schema

from qaconv.models.similarity import STAGES


def _odd(value):
    if value % 2 == 0:
        raise ValidationError("Kernel size must be odd")


class MetaRecordSchema(Schema):
    """One metadata line: identity, camera and optional frame + fps"""
    id = fields.Int(required=True)
    camera = fields.Int(required=True)
    frame = fields.Int(allow_none=True, load_default=None)
    fps = fields.Float(allow_none=True, load_default=None, validate=validate.Range(min=0, min_inclusive=False))
    time = fields.Float(allow_none=True, load_default=None)

    @validates_schema
    def validate_frame_fps(self, data, **kwargs):
        if (data.get('frame') is None) != (data.get('fps') is None):
            raise ValidationError("frame and fps must be both present or both absent")


class PipelineConfigSchema(Schema):
    """
    Keys accepted in key=value configuration files

    Every key is optional; absent keys fall back to the Config defaults.
    """
    kernel_size = fields.Int(validate=[validate.Range(min=1), _odd])
    threshold = fields.Float(validate=validate.Range(min=0, max=1))
    momentum = fields.Float(validate=validate.Range(min=0, max=1, min_inclusive=False, max_inclusive=False))

    gamma = fields.Float(validate=validate.Range(min=0))
    batch_size = fields.Int(validate=validate.Range(min=2))
    lr = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    lr_decay = fields.Float(validate=validate.Range(min=0))
    decay_epoch = fields.Int(validate=validate.Range(min=0))
    epochs = fields.Int(validate=validate.Range(min=1))
    update_mode = fields.Str(validate=validate.OneOf(['direct', 'ema']))
    ema_decay = fields.Float(validate=validate.Range(min=0, max=1, min_inclusive=False, max_inclusive=False))
    augment = fields.Bool()
    seed = fields.Int(validate=validate.Range(min=0))

    tau = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    sigma = fields.Float(validate=validate.Range(min=0, min_inclusive=False))
    k = fields.Int(validate=validate.Range(min=1))
    alpha = fields.Float(validate=validate.Range(min=0))
    exclude_same_camera = fields.Bool()

    k1 = fields.Int(validate=validate.Range(min=1))
    k2 = fields.Int(validate=validate.Range(min=1))
    rerank_lambda = fields.Float(data_key='lambda', validate=validate.Range(min=0, max=1))

    r_max = fields.Int(validate=validate.Range(min=1))
    workers = fields.Int(validate=validate.Range(min=1))
    gallery_block = fields.Int(validate=validate.Range(min=1))

    @validates_schema
    def validate_rerank(self, data, **kwargs):
        if 'k1' in data and 'k2' in data and data['k2'] > data['k1']:
            raise ValidationError("k2 must not exceed k1", field_name='k2')


class TLiftGridSchema(Schema):
    """Values a sweep may assign to one TLift parameter"""
    tau = fields.List(fields.Float(validate=validate.Range(min=0, min_inclusive=False)))
    sigma = fields.List(fields.Float(validate=validate.Range(min=0, min_inclusive=False)))
    k = fields.List(fields.Int(validate=validate.Range(min=1)))
    alpha = fields.List(fields.Float(validate=validate.Range(min=0)))


class ScoresRequestSchema(Schema):
    """Score matrix plus query/gallery metadata posted to the scoring API"""
    scores = fields.List(fields.List(fields.Float()), required=True)
    stage = fields.Str(load_default='probability', validate=validate.OneOf(STAGES))
    query = fields.List(fields.Nested(MetaRecordSchema), required=True)
    gallery = fields.List(fields.Nested(MetaRecordSchema), required=True)

    @validates('scores')
    def validate_scores(self, value, **kwargs):
        if not value or any(len(row) != len(value[0]) for row in value):
            raise ValidationError("scores must be a non-empty rectangular matrix")

    @validates_schema
    def validate_dims(self, data, **kwargs):
        scores = data.get('scores') or []
        if len(scores) != len(data.get('query', [])):
            raise ValidationError("scores needs one row per query record", field_name='scores')
        if scores and len(scores[0]) != len(data.get('gallery', [])):
            raise ValidationError("scores needs one column per gallery record", field_name='scores')


class EvaluateRequestSchema(ScoresRequestSchema):
    r_max = fields.Int(load_default=20, validate=validate.Range(min=1))


class TLiftRequestSchema(ScoresRequestSchema):
    tau = fields.Float(load_default=100.0, validate=validate.Range(min=0, min_inclusive=False))
    sigma = fields.Float(load_default=200.0, validate=validate.Range(min=0, min_inclusive=False))
    k = fields.Int(load_default=10, validate=validate.Range(min=1))
    alpha = fields.Float(load_default=0.2, validate=validate.Range(min=0))
    exclude_same_camera = fields.Bool(load_default=False)
