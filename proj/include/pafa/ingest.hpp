#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pafa/features.hpp"
#include "pafa/manifest.hpp"

namespace pafa {

struct IcbhiRecording {
  std::uint32_t patient = 0;
  std::string recording_index;
  std::string chest_location;
  std::string acquisition_mode;
  std::string equipment;
  std::string wav_path;
  std::string annotation_path;
};

// Basename convention: {patient}_{rec}_{loc}_{mode}_{equip}.
IcbhiRecording parse_icbhi_filename(const std::string& name);

struct AnnotatedCycle {
  double start_s = 0.0;
  double end_s = 0.0;
  int crackle = 0;
  int wheeze = 0;
};

// Whitespace-separated, four columns per line: start end crackle wheeze.
std::vector<AnnotatedCycle> parse_annotation_file(const std::filesystem::path& path);

struct OfficialSplitFile {
  std::filesystem::path path;
};
struct RandomSplit {
  double train_fraction = 0.6;
  std::uint64_t seed = 0;
};
using SplitSource = std::variant<OfficialSplitFile, RandomSplit>;

struct BuildManifestResult {
  Manifest manifest;
  std::vector<std::string> skipped;  // unpaired or unsplittable recordings
};

// One SampleMeta per annotated respiratory cycle, in sorted filename order.
// Unpaired files are reported, not fatal. Random splits are assigned per
// patient so they stay subject-disjoint.
BuildManifestResult build_manifest(const std::filesystem::path& root_dir,
                                   const SplitSource& split_source);

// --- synthetic data ---------------------------------------------------------

struct SynthConfig {
  int n_patients = 20;
  int samples_per_patient = 20;
  std::uint64_t seed = 1;
  std::array<double, 4> class_mix = {0.4, 0.25, 0.2, 0.15};
  double nuisance_strength = 1.0;
};

struct SynthSample {
  SampleMeta meta;
  WaveBuffer waveform;  // 16 kHz mono, |amplitude| <= 1
};

// Per-patient nuisance transform, drawn once from the seed and scaled by
// nuisance_strength: broadband gain in +-6 dB, spectral tilt in +-3 dB per
// octave, and a +-15% shift of an airway resonance center around 600 Hz.
struct PatientNuisance {
  double gain_db = 0.0;
  double tilt_db_per_octave = 0.0;
  double resonance_hz = 600.0;
};

struct SynthResult {
  Manifest manifest;
  std::vector<SynthSample> samples;
  std::vector<PatientNuisance> nuisances;  // indexed by patient id
};

// Class content: a band-limited noise bed with a slow breathing envelope,
// plus class events - damped oscillatory bursts for Crackle, a sustained
// tonal sweep for Wheeze, both for Both. Event carriers sit near the
// patient's resonance center, so inter-patient variability lands in the
// frequency location of the class evidence rather than in a purely
// multiplicative coloration (which per-utterance normalization cancels).
// The whole composite then passes through the patient's gain/tilt/resonance
// response. Splits are subject-disjoint 60/40.
SynthResult generate_synthetic(const SynthConfig& cfg);

}  // namespace pafa
