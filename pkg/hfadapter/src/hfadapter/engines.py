"""Model engines behind the serve loop.

WhisperAsrEngine wraps a Whisper-family checkpoint: greedy decoding by
default, confidence = exp(mean log-probability of the chosen tokens), and
the language tag read from the decoder's detected language token.
FastSpeechTtsEngine wraps a FastSpeech2-style synthesizer with a HiFi-GAN
vocoder. Both raise EngineError for per-request failures; construction
errors propagate so startup fails loudly.
"""

from __future__ import annotations

import math
import re
import wave

import numpy as np

LANGUAGE_TOKEN = re.compile(r"^<\|([a-z]{2,3})\|>$")


class EngineError(Exception):
    """The request could not be turned into a successful response."""


def read_mono_pcm16(path: str) -> tuple[np.ndarray, int]:
    """16-bit mono WAV -> (float32 samples in [-1, 1], sample rate)."""
    try:
        with wave.open(path, "rb") as handle:
            channels = handle.getnchannels()
            width = handle.getsampwidth()
            rate = handle.getframerate()
            frames = handle.readframes(handle.getnframes())
    except (OSError, wave.Error, EOFError) as exc:
        raise EngineError(f"cannot read audio {path!r}: {exc}") from exc
    if channels != 1 or width != 2:
        raise EngineError(
            f"audio {path!r} is {channels}-channel {8 * width}-bit, "
            "expected mono 16-bit PCM"
        )
    samples = np.frombuffer(frames, dtype=np.int16).astype(np.float32) / 32768.0
    return samples, rate


def write_mono_pcm16(path: str, samples: np.ndarray, rate: int) -> None:
    clipped = np.clip(np.asarray(samples, dtype=np.float32), -1.0, 1.0)
    pcm = (clipped * 32767.0).astype(np.int16)
    with open(path, "wb") as stream, wave.open(stream, "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(rate)
        handle.writeframes(pcm.tobytes())


class WhisperAsrEngine:
    """Speech-to-text over a local or hub Whisper checkpoint."""

    def __init__(
        self,
        model_id: str,
        device: str = "cpu",
        beam_size: int = 1,
        temperature: float = 0.0,
        max_new_tokens: int = 128,
    ):
        import torch
        from transformers import WhisperForConditionalGeneration, WhisperProcessor

        self._torch = torch
        self.processor = WhisperProcessor.from_pretrained(model_id)
        self.model = WhisperForConditionalGeneration.from_pretrained(model_id)
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.beam_size = beam_size
        self.temperature = temperature
        # The decoder prompt (start/language/task/timestamp tokens) and the
        # new tokens share the positional budget; leave room for the prompt.
        capacity = getattr(self.model.config, "max_target_positions", None)
        if capacity:
            max_new_tokens = min(max_new_tokens, max(1, int(capacity) - 8))
        self.max_new_tokens = max_new_tokens
        self.sampling_rate = self.processor.feature_extractor.sampling_rate
        self.multilingual = bool(
            getattr(self.model.generation_config, "is_multilingual", False)
        )

    def transcribe(self, audio_path: str) -> tuple[str, float, str]:
        samples, rate = read_mono_pcm16(audio_path)
        if rate != self.sampling_rate:
            raise EngineError(
                f"audio {audio_path!r} is {rate} Hz, model expects "
                f"{self.sampling_rate} Hz"
            )
        features = self.processor(
            samples, sampling_rate=rate, return_tensors="pt"
        ).input_features.to(self.device)
        kwargs = {
            "num_beams": self.beam_size,
            "max_new_tokens": self.max_new_tokens,
            "return_dict_in_generate": True,
            "output_scores": True,
        }
        if self.temperature > 0.0:
            kwargs.update(do_sample=True, temperature=self.temperature)
        else:
            kwargs["do_sample"] = False
        if self.multilingual:
            # Language left unset so the decoder detects it; the detected
            # token is read back out of the sequence.
            kwargs["task"] = "transcribe"
        with self._torch.no_grad():
            out = self.model.generate(features, **kwargs)
        sequence = out.sequences[0]
        text = self.processor.batch_decode(out.sequences, skip_special_tokens=True)[
            0
        ].strip()
        confidence = self._confidence(sequence, out.scores)
        language = self._language_tag(sequence)
        return text, confidence, language

    def _confidence(self, sequence, scores) -> float:
        if not scores:
            return 0.0
        chosen = sequence[len(sequence) - len(scores) :]
        log_probs = []
        for step_scores, token_id in zip(scores, chosen):
            log_softmax = self._torch.log_softmax(step_scores[0].float(), dim=-1)
            log_probs.append(float(log_softmax[token_id]))
        confidence = math.exp(sum(log_probs) / len(log_probs))
        return min(1.0, max(0.0, confidence))

    def _language_tag(self, sequence) -> str:
        tokens = self.processor.tokenizer.convert_ids_to_tokens(sequence.tolist())
        for token in tokens:
            match = LANGUAGE_TOKEN.match(token)
            if match:
                return match.group(1)
        return "en" if not self.multilingual else "und"


class FastSpeechTtsEngine:
    """Text-to-speech over a FastSpeech2-style checkpoint with vocoder."""

    def __init__(self, model_id: str, device: str = "cpu", sample_rate: int = 22050):
        import torch
        from transformers import (
            FastSpeech2ConformerTokenizer,
            FastSpeech2ConformerWithHifiGan,
        )

        self._torch = torch
        self.tokenizer = FastSpeech2ConformerTokenizer.from_pretrained(model_id)
        self.model = FastSpeech2ConformerWithHifiGan.from_pretrained(model_id)
        self.model.to(device)
        self.model.eval()
        self.device = device
        # The checkpoint config carries no output rate; 22050 Hz is the
        # reference vocoder's rate, overridable per engine.
        self.sample_rate = int(
            getattr(self.model.config, "sampling_rate", None) or sample_rate
        )

    def synthesize(self, text: str, voice: str, out_audio: str) -> tuple[str, float]:
        del voice  # single-speaker checkpoints; kept for protocol symmetry
        if not text.strip():
            raise EngineError("empty text")
        inputs = self.tokenizer(text, return_tensors="pt").input_ids.to(self.device)
        with self._torch.no_grad():
            waveform = self.model(inputs).waveform[0].cpu().numpy()
        if waveform.size == 0:
            raise EngineError("synthesis produced no audio")
        try:
            write_mono_pcm16(out_audio, waveform, self.sample_rate)
        except OSError as exc:
            raise EngineError(f"cannot write {out_audio!r}: {exc}") from exc
        return out_audio, waveform.size / self.sample_rate
