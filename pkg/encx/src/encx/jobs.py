"""Export job description and validation."""

from dataclasses import dataclass

MODES = ("iso", "aoc", "semb-parts")
FAMILIES = ("masked-lm", "sentence")
PARTS_SEQ_LENS = (64, 128, 256)


@dataclass(frozen=True)
class ExportJob:
    """Everything one export run needs.

    ``layer`` of None means the checkpoint's last layer; 0 addresses
    the embedding output below the first transformer block. ``tau``
    caps how many contexts an averaged term vector may use. ``family``
    picks the text-parts path: per-term states for plain masked-LM
    encoders, the native pooled vector for sentence encoders.
    """

    model_id: str
    mode: str
    output: str
    layer: int | None = None
    tau: int = 60
    max_seq_len: int = 128
    vocabulary: str | None = None
    corpus: str | None = None
    parts: str | None = None
    family: str = "masked-lm"

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; "
                             f"supported: {', '.join(MODES)}")
        if self.tau < 1:
            raise ValueError("tau must be positive")
        if self.max_seq_len < 3:
            raise ValueError("max_seq_len leaves no room for content")
        if self.mode == "iso" and not self.vocabulary:
            raise ValueError("mode iso needs a vocabulary file")
        if self.mode == "aoc" and not (self.vocabulary and self.corpus):
            raise ValueError("mode aoc needs a vocabulary file and a corpus")
        if self.mode == "semb-parts":
            if not self.parts:
                raise ValueError("mode semb-parts needs a parts file")
            if self.max_seq_len not in PARTS_SEQ_LENS:
                raise ValueError(
                    "parts export truncates at max_seq_len in "
                    f"{PARTS_SEQ_LENS}, got {self.max_seq_len}")
            if self.family not in FAMILIES:
                raise ValueError(
                    f"unknown checkpoint family {self.family!r}; "
                    f"supported: {', '.join(FAMILIES)}")
