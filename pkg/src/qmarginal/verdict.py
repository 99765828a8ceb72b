"""Three-valued decision outcome."""

from enum import Enum


class Verdict(str, Enum):
    YES = "YES"
    NO = "NO"
    UNDECIDED = "UNDECIDED"

    @property
    def exit_code(self) -> int:
        return {"YES": 0, "NO": 1, "UNDECIDED": 2}[self.value]

    def negate(self) -> "Verdict":
        if self is Verdict.YES:
            return Verdict.NO
        if self is Verdict.NO:
            return Verdict.YES
        return self

    @classmethod
    def from_bool(cls, flag: bool) -> "Verdict":
        return cls.YES if flag else cls.NO
