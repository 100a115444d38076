#include <doctest.h>

#include "pafa/labels.hpp"
#include "pafa/manifest.hpp"
#include "testutil.hpp"

using namespace pafa;

TEST_CASE("label_from_bits covers the annotation convention") {
  CHECK(label_from_bits(0, 0) == ClassLabel4::Normal);
  CHECK(label_from_bits(1, 0) == ClassLabel4::Crackle);
  CHECK(label_from_bits(0, 1) == ClassLabel4::Wheeze);
  CHECK(label_from_bits(1, 1) == ClassLabel4::Both);
}

TEST_CASE("map_4to2 sends exactly Normal to Normal") {
  CHECK(map_4to2(ClassLabel4::Normal) == ClassLabel2::Normal);
  CHECK(map_4to2(ClassLabel4::Crackle) == ClassLabel2::Abnormal);
  CHECK(map_4to2(ClassLabel4::Wheeze) == ClassLabel2::Abnormal);
  CHECK(map_4to2(ClassLabel4::Both) == ClassLabel2::Abnormal);

  int normals = 0;
  for (auto l : kAllLabels4)
    if (map_4to2(l) == ClassLabel2::Normal) ++normals;
  CHECK(normals == 1);
}

TEST_CASE("label serialization round-trips") {
  for (auto l : kAllLabels4) CHECK(parse_label4(to_string(l)) == l);
  CHECK_THROWS_AS(parse_label4("bogus"), ParseError);
}

namespace {

Manifest small_manifest() {
  Manifest m;
  m.provenance = Provenance::Synthetic;
  m.rows = {
      {"a_0", 1, ClassLabel4::Normal, Split::Train, "a.wav", 0.0, 1.5},
      {"a_1", 1, ClassLabel4::Crackle, Split::Train, "a.wav", 1.5, 3.25},
      {"b_0", 2, ClassLabel4::Wheeze, Split::Test, "b.wav", 0.036, 0.579},
      {"b_1", 2, ClassLabel4::Both, Split::Test, "b.wav", 0.6, 2.0},
  };
  return m;
}

}  // namespace

TEST_CASE("validate_manifest accepts a clean fixture") {
  const auto report = validate_manifest(small_manifest());
  CHECK(report.empty());
  CHECK(report.valid());
}

TEST_CASE("validate_manifest flags duplicate sample ids") {
  auto m = small_manifest();
  m.rows.push_back(m.rows[0]);
  const auto report = validate_manifest(m);
  CHECK_FALSE(report.valid());
  bool found = false;
  for (const auto& issue : report.issues)
    if (issue.rule == "unique-sample-id" && issue.message.find("a_0") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("validate_manifest flags subject-spanning splits") {
  auto m = small_manifest();
  m.rows.push_back({"c_0", 7, ClassLabel4::Normal, Split::Train, "c.wav", 0.0, 1.0});
  m.rows.push_back({"c_1", 7, ClassLabel4::Normal, Split::Test, "c.wav", 1.0, 2.0});

  const auto report = validate_manifest(m);
  CHECK_FALSE(report.valid());
  bool found = false;
  for (const auto& issue : report.issues)
    if (issue.rule == "subject-disjoint" && issue.message.find('7') != std::string::npos)
      found = true;
  CHECK(found);

  // The official ICBHI split is recording-based, so the same layout only
  // warns under icbhi provenance.
  m.provenance = Provenance::Icbhi;
  const auto icbhi_report = validate_manifest(m);
  CHECK(icbhi_report.valid());
  CHECK_FALSE(icbhi_report.empty());
}

TEST_CASE("validate_manifest flags bad cycle bounds") {
  auto m = small_manifest();
  m.rows[0].cycle_end_s = m.rows[0].cycle_start_s;
  CHECK_FALSE(validate_manifest(m).valid());
  m.rows[0].cycle_start_s = -0.5;
  m.rows[0].cycle_end_s = 1.0;
  CHECK_FALSE(validate_manifest(m).valid());
}

TEST_CASE("manifest CSV round-trip is the identity on valid manifests") {
  testutil::TempDir tmp("manifest");
  const auto m = small_manifest();
  const auto path = tmp.path() / "manifest.csv";
  save_manifest_csv(path, m);
  const auto loaded = load_manifest_csv(path);
  CHECK(loaded == m);

  // Re-serializing yields identical bytes.
  const auto path2 = tmp.path() / "again.csv";
  save_manifest_csv(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
}

TEST_CASE("manifest load failures are I/O errors, not validation reports") {
  CHECK_THROWS_AS(load_manifest_csv("/nonexistent/manifest.csv"), IoError);
}

TEST_CASE("manifest parse failures name the line") {
  testutil::TempDir tmp("manifest_bad");
  const auto path = tmp.path() / "bad.csv";
  {
    std::ofstream out(path);
    out << "sample_id,patient,label,split,source_path,cycle_start_s,cycle_end_s\n";
    out << "a_0,1,normal,train,a.wav,zero,1.5\n";
  }
  CHECK_THROWS_AS(load_manifest_csv(path), ParseError);
}
