"""HTTP service wrapping a frozen checkpoint and an optional corpus directory.

The model is loaded once at startup and only ever read afterwards, so
concurrent synthesis requests are safe. Corpus-backed endpoints (reference
resolution, statistics) are available when the service is pointed at a
corpus directory.
"""

from __future__ import annotations

import base64
import io
import os
import struct

import numpy as np
from fastapi import FastAPI, HTTPException

from ..audio import AudioConfig
from ..corpus import (
    StatisticsConfig,
    compute_statistics,
    load_alignment,
    load_manifest,
)
from ..errors import InputError, PunchlineError
from ..frontend import FillerRegistry, expand_special_tokens, replace_fillers
from ..melio import MAGIC, read_mel
from ..synthesis import (
    DurationTrace,
    SynthesisRequest,
    compare_durations,
    pick_reference,
    synthesize,
)
from ..training.checkpoint import Checkpoint, load_checkpoint
from .schemas import (
    CompareDurationsRequest,
    CompareDurationsResponse,
    ErrorRecord,
    ExpandTokensRequest,
    ExpandTokensResponse,
    HealthResponse,
    ModelInfoResponse,
    ReplaceFillersRequest,
    ReplaceFillersResponse,
    SpeakerStatisticsModel,
    StatisticsResponse,
    SynthesizeRequest,
    SynthesizeResponse,
    TraceSegment,
)


class ServiceState:
    """Everything the endpoints read: checkpoint, corpus, registry."""

    def __init__(
        self,
        checkpoint_path: str | None = None,
        corpus_dir: str | None = None,
        audio_config: AudioConfig | None = None,
    ):
        self.audio_config = audio_config or AudioConfig()
        self.checkpoint: Checkpoint | None = (
            load_checkpoint(checkpoint_path) if checkpoint_path else None
        )
        self.corpus_dir = corpus_dir
        self.records = []
        self.registry = FillerRegistry.empty()
        if corpus_dir:
            self.records = load_manifest(os.path.join(corpus_dir, "manifest.tsv"))
            registry_path = os.path.join(corpus_dir, "registry.tsv")
            if os.path.exists(registry_path):
                self.registry = FillerRegistry.load(registry_path)

    def require_checkpoint(self) -> Checkpoint:
        if self.checkpoint is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        return self.checkpoint

    def resolve_reference_mel(self, speaker_id: str, clip_id: str | None, seed: int):
        if self.checkpoint is None:
            return None, None
        if not self.checkpoint.model.config.use_prosody_encoder:
            return None, None
        if not self.corpus_dir:
            raise HTTPException(
                status_code=503,
                detail="reference resolution needs a corpus directory",
            )
        if clip_id is not None:
            matches = [r for r in self.records if r.utterance_id == clip_id]
            if not matches:
                raise HTTPException(
                    status_code=404, detail=f"reference clip {clip_id!r} not found"
                )
            record = matches[0]
        else:
            try:
                record = pick_reference(self.records, speaker_id, seed)
            except InputError as err:
                raise HTTPException(status_code=404, detail=str(err)) from err
        mel_path = os.path.join(
            self.corpus_dir, "mels", f"{record.utterance_id}.mel"
        )
        return read_mel(mel_path), record.utterance_id


def _mel_payload(mel: np.ndarray) -> str:
    buffer = io.BytesIO()
    buffer.write(struct.pack("<4sII", MAGIC, mel.shape[0], mel.shape[1]))
    buffer.write(mel.astype("<f4").tobytes(order="C"))
    return base64.b64encode(buffer.getvalue()).decode("ascii")


def create_app(
    checkpoint_path: str | None = None,
    corpus_dir: str | None = None,
    audio_config: AudioConfig | None = None,
) -> FastAPI:
    state = ServiceState(checkpoint_path, corpus_dir, audio_config)
    app = FastAPI(title="punchline-tts", version="0.1.0")
    app.state.service = state

    @app.exception_handler(PunchlineError)
    async def _package_error(request, exc: PunchlineError):
        from fastapi.responses import JSONResponse

        record = ErrorRecord(error=type(exc).__name__, message=str(exc))
        return JSONResponse(status_code=400, content=record.model_dump())

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(
            status="ok",
            checkpoint_loaded=state.checkpoint is not None,
            corpus_loaded=bool(state.records),
        )

    @app.get("/model", response_model=ModelInfoResponse)
    def model_info():
        ckpt = state.require_checkpoint()
        cfg = ckpt.model.config
        return ModelInfoResponse(
            profile=cfg.profile,
            step=ckpt.step,
            symbol_count=cfg.symbol_count,
            mel_bins=cfg.mel_bins,
            hidden_width=cfg.hidden_width,
            cln_sites=list(cfg.cln_sites),
            prosody_tokens=cfg.prosody.num_tokens,
            prosody_dim=cfg.prosody.dim,
            special_tokens=ckpt.symbol_table.special_tokens,
            symbol_table_hash=ckpt.symbol_table.content_hash(),
        )

    @app.post("/synthesize", response_model=SynthesizeResponse)
    def synthesize_endpoint(request: SynthesizeRequest):
        ckpt = state.require_checkpoint()
        reference_mel, clip_id = state.resolve_reference_mel(
            request.speaker_id, request.reference_clip_id, request.seed
        )
        result = synthesize(
            ckpt,
            SynthesisRequest(
                phonemes=request.phonemes,
                speaker_id=request.speaker_id,
                reference_clip_id=clip_id,
                seed=request.seed,
                name=request.name,
                return_waveform=request.return_waveform,
            ),
            reference_mel=reference_mel,
            audio_config=state.audio_config,
        )
        waveform_b64 = None
        if result.waveform is not None:
            clipped = np.clip(result.waveform, -1.0, 1.0)
            waveform_b64 = base64.b64encode(
                (clipped * 32767).astype("<i2").tobytes()
            ).decode("ascii")
        return SynthesizeResponse(
            frames=result.mel.shape[0],
            mel_bins=result.mel.shape[1],
            mel_base64=_mel_payload(result.mel),
            trace=[
                TraceSegment(label=label, start=start, frames=frames)
                for label, start, frames in result.trace.segments
            ],
            reference_clip_id=result.reference_clip_id,
            sample_rate=state.audio_config.sample_rate,
            waveform_base64=waveform_b64,
        )

    @app.post("/fillers/replace", response_model=ReplaceFillersResponse)
    def fillers_replace(request: ReplaceFillersRequest):
        return ReplaceFillersResponse(
            phonemes=replace_fillers(
                request.phonemes, request.speaker_id, state.registry
            )
        )

    @app.post("/fillers/expand", response_model=ExpandTokensResponse)
    def fillers_expand(request: ExpandTokensRequest):
        return ExpandTokensResponse(
            phonemes=expand_special_tokens(request.phonemes, state.registry)
        )

    @app.get("/statistics", response_model=StatisticsResponse)
    def statistics():
        if not state.corpus_dir or not state.records:
            raise HTTPException(status_code=503, detail="no corpus directory loaded")
        alignments, pitch, energy = {}, {}, {}
        for record in state.records:
            u = record.utterance_id
            alignments[u] = load_alignment(
                os.path.join(state.corpus_dir, "alignments", f"{u}.lab")
            )
            pitch[u] = _read_track(os.path.join(state.corpus_dir, "pitch", f"{u}.txt"))
            energy[u] = _read_track(
                os.path.join(state.corpus_dir, "energy", f"{u}.txt")
            )
        stats = compute_statistics(
            state.records,
            alignments,
            pitch,
            energy,
            StatisticsConfig(frame_hop_s=state.audio_config.frame_hop_s),
        )
        return StatisticsResponse(
            speakers={
                speaker: SpeakerStatisticsModel(**s.to_dict())
                for speaker, s in stats.items()
            }
        )

    @app.post("/durations/compare", response_model=CompareDurationsResponse)
    def durations_compare(request: CompareDurationsRequest):
        def to_trace(payload):
            return DurationTrace(
                name=payload.name,
                segments=[(s.label, s.start, s.frames) for s in payload.segments],
            )

        report = compare_durations(to_trace(request.trace_a), to_trace(request.trace_b))
        return CompareDurationsResponse(**report)

    return app


def _read_track(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return np.asarray([float(line) for line in fh if line.strip()])
