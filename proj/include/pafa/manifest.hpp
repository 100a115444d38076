#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pafa/labels.hpp"

namespace pafa {

enum class Split : int { Train = 0, Test = 1 };

inline std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

inline Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  throw ParseError("unknown split: '" + std::string(text) + "'");
}

enum class Provenance : int { Icbhi = 0, Synthetic = 1 };

struct SampleMeta {
  std::string sample_id;
  std::uint32_t patient = 0;
  ClassLabel4 label = ClassLabel4::Normal;
  Split split = Split::Train;
  std::string source_path;
  double cycle_start_s = 0.0;
  double cycle_end_s = 0.0;

  bool operator==(const SampleMeta&) const = default;
};

struct Manifest {
  std::vector<SampleMeta> rows;
  Provenance provenance = Provenance::Synthetic;

  bool operator==(const Manifest&) const = default;
};

struct ValidationIssue {
  enum class Severity { Warning, Error };
  Severity severity = Severity::Error;
  std::string rule;     // e.g. "subject-disjoint", "unique-sample-id"
  std::string message;  // names the offending patient / sample id
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool valid() const {
    for (const auto& i : issues)
      if (i.severity == ValidationIssue::Severity::Error) return false;
    return true;
  }
  bool empty() const { return issues.empty(); }
};

// Checks per-row field invariants, sample-id uniqueness and subject-disjoint
// splits. For ICBHI provenance a subject spanning both splits only warns (the
// official split is recording-based); for synthetic data it is an error.
ValidationReport validate_manifest(const Manifest& m);

// CSV with header sample_id,patient,label,split,source_path,cycle_start_s,cycle_end_s.
// Seconds are written with shortest round-trip formatting so that
// save -> load is the identity on valid manifests.
void save_manifest_csv(const std::filesystem::path& path, const Manifest& m);
Manifest load_manifest_csv(const std::filesystem::path& path);

std::vector<SampleMeta> rows_in_split(const Manifest& m, Split split);

}  // namespace pafa
