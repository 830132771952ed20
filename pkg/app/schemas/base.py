from pydantic import BaseModel, ConfigDict


class BaseSchema(BaseModel):
    """Base schema for reports written by the engine."""

    model_config = ConfigDict(
        from_attributes=True,
        populate_by_name=True,
        str_strip_whitespace=True,
        ser_json_inf_nan="strings",
    )


class InputSchema(BaseSchema):
    """Base schema for user-authored input; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")
