#include "pafa/manifest.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace pafa {

namespace {

constexpr std::string_view kHeader =
    "sample_id,patient,label,split,source_path,cycle_start_s,cycle_end_s";

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc())
    throw DataError("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("bad number '" + std::string(s) + "' in " + context);
  return v;
}

std::uint32_t parse_u32(std::string_view s, const std::string& context) {
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("bad integer '" + std::string(s) + "' in " + context);
  return v;
}

void check_field_text(const std::string& value, const std::string& field) {
  if (value.find_first_of(",\"\n\r") != std::string::npos)
    throw DataError("manifest field " + field + " contains a reserved character: '" + value + "'");
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

ValidationReport validate_manifest(const Manifest& m) {
  ValidationReport report;
  std::unordered_set<std::string> seen_ids;
  std::unordered_map<std::uint32_t, std::set<Split>> splits_by_patient;

  for (const auto& row : m.rows) {
    if (!seen_ids.insert(row.sample_id).second) {
      report.issues.push_back({ValidationIssue::Severity::Error, "unique-sample-id",
                               "duplicate sample_id '" + row.sample_id + "'"});
    }
    if (!(row.cycle_end_s > row.cycle_start_s) || !(row.cycle_start_s >= 0.0)) {
      report.issues.push_back({ValidationIssue::Severity::Error, "cycle-bounds",
                               "sample '" + row.sample_id + "' has cycle [" +
                                   format_double(row.cycle_start_s) + ", " +
                                   format_double(row.cycle_end_s) + ")"});
    }
    splits_by_patient[row.patient].insert(row.split);
  }

  for (const auto& [patient, splits] : splits_by_patient) {
    if (splits.size() > 1) {
      // The official ICBHI split is recording-based and trusted as-is.
      auto severity = m.provenance == Provenance::Icbhi ? ValidationIssue::Severity::Warning
                                                        : ValidationIssue::Severity::Error;
      report.issues.push_back({severity, "subject-disjoint",
                               "patient " + std::to_string(patient) +
                                   " appears in both train and test"});
    }
  }
  return report;
}

void save_manifest_csv(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open manifest for writing: " + path.string());
  out << kHeader << "\n";
  out << "#provenance," << (m.provenance == Provenance::Icbhi ? "icbhi" : "synthetic") << "\n";
  for (const auto& row : m.rows) {
    check_field_text(row.sample_id, "sample_id");
    check_field_text(row.source_path, "source_path");
    out << row.sample_id << ',' << row.patient << ',' << to_string(row.label) << ','
        << to_string(row.split) << ',' << row.source_path << ','
        << format_double(row.cycle_start_s) << ',' << format_double(row.cycle_end_s) << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Manifest load_manifest_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path.string());

  Manifest m;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("manifest is empty: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader)
    throw ParseError("manifest header mismatch in " + path.string() + ": got '" + line + "'");

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto fields = split_csv(std::string_view(line).substr(1));
      if (fields.size() == 2 && fields[0] == "provenance")
        m.provenance = fields[1] == "icbhi" ? Provenance::Icbhi : Provenance::Synthetic;
      continue;
    }
    const std::string context = path.string() + ":" + std::to_string(line_no);
    auto fields = split_csv(line);
    if (fields.size() != 7)
      throw ParseError("expected 7 fields, got " + std::to_string(fields.size()) + " at " + context);
    SampleMeta row;
    row.sample_id = std::string(fields[0]);
    row.patient = parse_u32(fields[1], context);
    row.label = parse_label4(fields[2]);
    row.split = parse_split(fields[3]);
    row.source_path = std::string(fields[4]);
    row.cycle_start_s = parse_double(fields[5], context);
    row.cycle_end_s = parse_double(fields[6], context);
    m.rows.push_back(std::move(row));
  }
  return m;
}

std::vector<SampleMeta> rows_in_split(const Manifest& m, Split split) {
  std::vector<SampleMeta> out;
  for (const auto& row : m.rows)
    if (row.split == split) out.push_back(row);
  return out;
}

}  // namespace pafa
