"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    checkpoint_loaded: bool
    corpus_loaded: bool


class ModelInfoResponse(BaseModel):
    profile: str
    step: int
    symbol_count: int
    mel_bins: int
    hidden_width: int
    cln_sites: list[str]
    prosody_tokens: int
    prosody_dim: int
    special_tokens: list[str]
    symbol_table_hash: str


class TraceSegment(BaseModel):
    label: str
    start: int
    frames: int


class SynthesizeRequest(BaseModel):
    phonemes: list[str] = Field(min_length=1)
    speaker_id: str
    reference_clip_id: str | None = None
    seed: int = 0
    return_waveform: bool = False
    name: str | None = None


class SynthesizeResponse(BaseModel):
    frames: int
    mel_bins: int
    mel_base64: str
    trace: list[TraceSegment]
    reference_clip_id: str | None
    sample_rate: int
    waveform_base64: str | None = None


class ReplaceFillersRequest(BaseModel):
    phonemes: list[str] = Field(min_length=1)
    speaker_id: str


class ReplaceFillersResponse(BaseModel):
    phonemes: list[str]


class ExpandTokensRequest(BaseModel):
    phonemes: list[str] = Field(min_length=1)


class ExpandTokensResponse(BaseModel):
    phonemes: list[str]


class SpeakerStatisticsModel(BaseModel):
    clips: int
    total_duration_s: float
    words: int
    words_per_second: float
    avg_pause_ms: float
    avg_energy: float
    avg_pitch: float
    has_pauses: bool


class StatisticsResponse(BaseModel):
    speakers: dict[str, SpeakerStatisticsModel]


class TracePayload(BaseModel):
    name: str
    segments: list[TraceSegment]


class CompareDurationsRequest(BaseModel):
    trace_a: TracePayload
    trace_b: TracePayload


class SegmentDelta(BaseModel):
    label: str
    frames_a: int
    frames_b: int
    delta: int


class CompareDurationsResponse(BaseModel):
    trace_a: str
    trace_b: str
    segments: list[SegmentDelta]
    total_frames_a: int
    total_frames_b: int
    total_delta: int
    rank_correlation: float


class ErrorRecord(BaseModel):
    error: str
    message: str
