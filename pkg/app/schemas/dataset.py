from pydantic import BaseModel, ConfigDict, Field, field_validator


class RatingRecord(BaseModel):
    """One (user, item, rating) triple."""

    model_config = ConfigDict(frozen=True)

    user: int = Field(..., description="User id")
    item: int = Field(..., description="Item id")
    rating: float = Field(..., description="Rating on the dataset scale")


class GroupSpec(BaseModel):
    """A group of users; members are kept sorted and distinct."""

    model_config = ConfigDict(frozen=True)

    id: int = Field(..., description="Group identifier")
    members: tuple[int, ...] = Field(
        ...,
        min_length=1,
        description="Member user-ids",
    )

    @field_validator("members")
    @classmethod
    def _sorted_distinct(cls, members: tuple[int, ...]) -> tuple[int, ...]:
        if len(set(members)) != len(members):
            raise ValueError("group members must be distinct")
        return tuple(sorted(members))

    @property
    def size(self) -> int:
        return len(self.members)
