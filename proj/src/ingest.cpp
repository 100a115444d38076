#include "pafa/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "pafa/rng.hpp"

namespace pafa {

namespace {

std::vector<std::string> split_tokens(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> whitespace_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

IcbhiRecording parse_icbhi_filename(const std::string& name) {
  const auto tokens = split_tokens(name, '_');
  if (tokens.size() < 5)
    throw ParseError("ICBHI basename '" + name + "' has " + std::to_string(tokens.size()) +
                     " underscore-delimited tokens, expected at least 5");
  IcbhiRecording rec;
  std::uint32_t patient = 0;
  const auto& tok = tokens[0];
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), patient);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("ICBHI basename '" + name + "': patient token '" + tok +
                     "' is not a non-negative integer");
  rec.patient = patient;
  rec.recording_index = tokens[1];
  rec.chest_location = tokens[2];
  rec.acquisition_mode = tokens[3];
  rec.equipment = tokens[4];
  return rec;
}

std::vector<AnnotatedCycle> parse_annotation_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file: " + path.string());
  std::vector<AnnotatedCycle> cycles;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tokens = whitespace_tokens(line);
    if (tokens.empty()) continue;
    const std::string context = path.string() + ":" + std::to_string(line_no);
    if (tokens.size() != 4)
      throw ParseError("expected 4 columns, got " + std::to_string(tokens.size()) + " at " +
                       context);
    AnnotatedCycle c;
    auto parse_num = [&](const std::string& tok) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ParseError("non-numeric field '" + tok + "' at " + context);
      return v;
    };
    c.start_s = parse_num(tokens[0]);
    c.end_s = parse_num(tokens[1]);
    const double crackle = parse_num(tokens[2]);
    const double wheeze = parse_num(tokens[3]);
    if (crackle != 0.0 && crackle != 1.0)
      throw ParseError("crackle bit outside {0,1} at " + context);
    if (wheeze != 0.0 && wheeze != 1.0) throw ParseError("wheeze bit outside {0,1} at " + context);
    if (!(c.end_s > c.start_s)) throw ParseError("cycle end <= start at " + context);
    c.crackle = static_cast<int>(crackle);
    c.wheeze = static_cast<int>(wheeze);
    cycles.push_back(c);
  }
  return cycles;
}

namespace {

std::map<std::string, Split> load_official_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split file: " + path.string());
  std::map<std::string, Split> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tokens = whitespace_tokens(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 2)
      throw ParseError("expected 2 columns at " + path.string() + ":" + std::to_string(line_no));
    out[tokens[0]] = parse_split(tokens[1]);
  }
  return out;
}

}  // namespace

BuildManifestResult build_manifest(const std::filesystem::path& root_dir,
                                   const SplitSource& split_source) {
  if (!std::filesystem::is_directory(root_dir))
    throw IoError("not a directory: " + root_dir.string());

  std::vector<std::filesystem::path> wavs;
  for (const auto& entry : std::filesystem::directory_iterator(root_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      wavs.push_back(entry.path());
  }
  std::sort(wavs.begin(), wavs.end());

  std::optional<std::map<std::string, Split>> official;
  if (const auto* f = std::get_if<OfficialSplitFile>(&split_source))
    official = load_official_split(f->path);

  BuildManifestResult result;
  result.manifest.provenance = Provenance::Icbhi;

  struct PendingRow {
    SampleMeta meta;
    std::string basename;
  };
  std::vector<PendingRow> pending;

  for (const auto& wav : wavs) {
    const std::string basename = wav.stem().string();
    std::filesystem::path annotation = wav;
    annotation.replace_extension(".txt");
    if (!std::filesystem::exists(annotation)) {
      result.skipped.push_back(basename + ": missing annotation file");
      continue;
    }
    IcbhiRecording rec;
    try {
      rec = parse_icbhi_filename(basename);
    } catch (const ParseError& e) {
      result.skipped.push_back(basename + ": " + e.what());
      continue;
    }
    const auto cycles = parse_annotation_file(annotation);
    int index = 0;
    for (const auto& c : cycles) {
      SampleMeta row;
      row.sample_id = basename + "_" + std::to_string(index++);
      row.patient = rec.patient;
      row.label = label_from_bits(c.crackle, c.wheeze);
      row.source_path = wav.filename().string();
      row.cycle_start_s = c.start_s;
      row.cycle_end_s = c.end_s;
      pending.push_back({std::move(row), basename});
    }
  }

  if (official) {
    std::vector<PendingRow> kept;
    for (auto& p : pending) {
      auto it = official->find(p.basename);
      if (it == official->end()) {
        result.skipped.push_back(p.basename + ": not listed in split file");
        continue;
      }
      p.meta.split = it->second;
      kept.push_back(std::move(p));
    }
    pending = std::move(kept);
  } else {
    const auto& rs = std::get<RandomSplit>(split_source);
    if (!(rs.train_fraction > 0.0 && rs.train_fraction < 1.0))
      throw DataError("random split fraction must be in (0, 1)");
    std::vector<std::uint32_t> patients;
    for (const auto& p : pending)
      if (std::find(patients.begin(), patients.end(), p.meta.patient) == patients.end())
        patients.push_back(p.meta.patient);
    std::sort(patients.begin(), patients.end());
    Rng rng(derive_seed(rs.seed, "manifest-split"));
    rng.shuffle(patients);
    std::size_t n_train = static_cast<std::size_t>(
        std::llround(rs.train_fraction * static_cast<double>(patients.size())));
    if (patients.size() >= 2)
      n_train = std::clamp<std::size_t>(n_train, 1, patients.size() - 1);
    std::map<std::uint32_t, Split> by_patient;
    for (std::size_t i = 0; i < patients.size(); ++i)
      by_patient[patients[i]] = i < n_train ? Split::Train : Split::Test;
    for (auto& p : pending) p.meta.split = by_patient[p.meta.patient];
  }

  for (auto& p : pending) result.manifest.rows.push_back(std::move(p.meta));
  return result;
}

// --- synthetic data ---------------------------------------------------------

namespace {

constexpr int kSynthSamplesLen = 32768;  // 2.048 s at 16 kHz, power of two
constexpr double kBedRms = 0.05;
constexpr double kCrackleAmp = 0.20;
constexpr double kWheezeAmp = 0.085;
constexpr double kResonanceBaseHz = 600.0;

// Apportion samples_per_patient across classes by largest remainder so that
// every patient has the same class composition.
std::array<int, 4> class_counts(int total, const std::array<double, 4>& mix) {
  std::array<int, 4> counts{};
  std::array<double, 4> remainders{};
  int assigned = 0;
  for (int c = 0; c < 4; ++c) {
    const double exact = mix[static_cast<std::size_t>(c)] * total;
    counts[static_cast<std::size_t>(c)] = static_cast<int>(std::floor(exact));
    remainders[static_cast<std::size_t>(c)] = exact - std::floor(exact);
    assigned += counts[static_cast<std::size_t>(c)];
  }
  while (assigned < total) {
    int best = 0;
    for (int c = 1; c < 4; ++c)
      if (remainders[static_cast<std::size_t>(c)] > remainders[static_cast<std::size_t>(best)])
        best = c;
    ++counts[static_cast<std::size_t>(best)];
    remainders[static_cast<std::size_t>(best)] = -1.0;
    ++assigned;
  }
  return counts;
}

// Magnitude response of a patient's gain/tilt/resonance chain at frequency f.
double nuisance_response(const PatientNuisance& n, double f) {
  if (f <= 0.0) return 0.0;
  const double gain = std::pow(10.0, n.gain_db / 20.0);
  const double tilt = std::pow(10.0, n.tilt_db_per_octave * std::log2(f / 1000.0) / 20.0);
  const double octaves = std::log2(f / n.resonance_hz);
  const double resonance = 1.0 + 1.8 * std::exp(-octaves * octaves / (2.0 * 0.18 * 0.18));
  return gain * tilt * resonance;
}

void add_crackles(std::vector<double>& x, Rng& rng, double resonance_hz, double amp) {
  const int n_bursts = 4 + static_cast<int>(rng.below(5));
  for (int b = 0; b < n_bursts; ++b) {
    const auto t0 = static_cast<std::size_t>(
        rng.uniform(0.05, 0.95) * static_cast<double>(kSynthSamplesLen));
    const double f_ring = resonance_hz * rng.uniform(0.85, 1.15);
    const double a = amp * rng.uniform(0.7, 1.3);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double tau = rng.uniform(0.0020, 0.0035);  // seconds
    const std::size_t len = 320;                     // 20 ms
    for (std::size_t i = 0; i < len && t0 + i < x.size(); ++i) {
      const double t = static_cast<double>(i) / kTargetRateHz;
      x[t0 + i] += a * std::exp(-t / tau) *
                   (std::sin(2.0 * M_PI * f_ring * t + phase) + 0.15 * rng.normal());
    }
  }
}

void add_wheeze(std::vector<double>& x, Rng& rng, double resonance_hz, double amp) {
  const double start_frac = rng.uniform(0.05, 0.35);
  const double len_frac = rng.uniform(0.35, 0.55);
  const auto t0 = static_cast<std::size_t>(start_frac * kSynthSamplesLen);
  const auto len = static_cast<std::size_t>(len_frac * kSynthSamplesLen);
  const double f0 = resonance_hz * rng.uniform(0.88, 1.12);
  const double f1 = f0 * rng.uniform(0.88, 1.12);
  const double a = amp * rng.uniform(0.8, 1.25);
  double phase = rng.uniform(0.0, 2.0 * M_PI);
  for (std::size_t i = 0; i < len && t0 + i < x.size(); ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(len);
    const double f = f0 + (f1 - f0) * u;
    phase += 2.0 * M_PI * f / kTargetRateHz;
    const double envelope = 0.5 - 0.5 * std::cos(2.0 * M_PI * u);  // on/off ramp
    x[t0 + i] += a * envelope * std::sin(phase);
  }
}

std::vector<double> synthesize_waveform(ClassLabel4 label, const PatientNuisance& nuisance,
                                        Rng& rng) {
  std::vector<double> x(kSynthSamplesLen);

  // Breathing-modulated noise bed.
  const double breath_hz = rng.uniform(0.25, 0.4);
  const double breath_phase = rng.uniform(0.0, 2.0 * M_PI);
  for (auto& s : x) s = rng.normal();
  std::vector<double> re = x, im(x.size(), 0.0);
  fft_radix2(re, im);
  // Band-limit the bed to 100-2000 Hz with raised-cosine edges, and apply
  // the patient response to everything in one pass after events are added.
  const auto band_weight = [](double f) {
    if (f < 60.0 || f > 2400.0) return 0.0;
    if (f < 100.0) return 0.5 - 0.5 * std::cos(M_PI * (f - 60.0) / 40.0);
    if (f > 2000.0) return 0.5 + 0.5 * std::cos(M_PI * (f - 2000.0) / 400.0);
    return 1.0;
  };
  const std::size_t n = x.size();
  for (std::size_t j = 0; j <= n / 2; ++j) {
    const double f = static_cast<double>(j) * kTargetRateHz / static_cast<double>(n);
    const double wgt = band_weight(f);
    re[j] *= wgt;
    im[j] *= wgt;
    if (j != 0 && j != n / 2) {
      re[n - j] = re[j];
      im[n - j] = -im[j];
    }
  }
  fft_radix2(re, im, true);
  double rms = 0.0;
  for (double s : re) rms += s * s;
  rms = std::sqrt(rms / static_cast<double>(n));
  const double bed_scale = rms > 0 ? kBedRms / rms : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kTargetRateHz;
    const double breath = 0.55 + 0.45 * std::sin(2.0 * M_PI * breath_hz * t + breath_phase);
    x[i] = re[i] * bed_scale * breath;
  }

  if (label == ClassLabel4::Crackle)
    add_crackles(x, rng, nuisance.resonance_hz, kCrackleAmp);
  else if (label == ClassLabel4::Wheeze)
    add_wheeze(x, rng, nuisance.resonance_hz, kWheezeAmp);
  else if (label == ClassLabel4::Both) {
    add_crackles(x, rng, nuisance.resonance_hz, kCrackleAmp * 0.8);
    add_wheeze(x, rng, nuisance.resonance_hz, kWheezeAmp * 0.8);
  }

  // Patient gain/tilt/resonance applied to the composite, zero phase.
  re = x;
  std::fill(im.begin(), im.end(), 0.0);
  fft_radix2(re, im);
  for (std::size_t j = 0; j <= n / 2; ++j) {
    const double f = static_cast<double>(j) * kTargetRateHz / static_cast<double>(n);
    const double h = nuisance_response(nuisance, f);
    re[j] *= h;
    im[j] *= h;
    if (j != 0 && j != n / 2) {
      re[n - j] = re[j];
      im[n - j] = -im[j];
    }
  }
  fft_radix2(re, im, true);
  x = std::move(re);

  double peak = 0.0;
  for (double s : x) peak = std::max(peak, std::abs(s));
  if (peak > 0.99)
    for (auto& s : x) s *= 0.99 / peak;
  return x;
}

}  // namespace

SynthResult generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n_patients < 2) throw DataError("synthetic data needs at least 2 patients");
  if (cfg.samples_per_patient < 1) throw DataError("samples_per_patient must be >= 1");
  double mix_sum = 0.0;
  for (double m : cfg.class_mix) {
    if (m < 0.0) throw DataError("class_mix probabilities must be non-negative");
    mix_sum += m;
  }
  if (std::abs(mix_sum - 1.0) > 1e-9) throw DataError("class_mix must sum to 1");
  if (cfg.nuisance_strength < 0.0) throw DataError("nuisance_strength must be non-negative");

  SynthResult result;
  result.manifest.provenance = Provenance::Synthetic;

  // Subject-disjoint 60/40 split.
  std::vector<std::uint32_t> patients(static_cast<std::size_t>(cfg.n_patients));
  for (std::size_t i = 0; i < patients.size(); ++i) patients[i] = static_cast<std::uint32_t>(i);
  std::vector<std::uint32_t> shuffled = patients;
  Rng split_rng(derive_seed(cfg.seed, "synth-split"));
  split_rng.shuffle(shuffled);
  auto n_train = static_cast<std::size_t>(std::llround(0.6 * cfg.n_patients));
  n_train = std::clamp<std::size_t>(n_train, 1, patients.size() - 1);
  std::vector<Split> split_of(patients.size(), Split::Test);
  for (std::size_t i = 0; i < n_train; ++i) split_of[shuffled[i]] = Split::Train;

  result.nuisances.resize(patients.size());
  const auto counts = class_counts(cfg.samples_per_patient, cfg.class_mix);

  for (std::uint32_t patient : patients) {
    Rng patient_rng(derive_seed(cfg.seed, "synth-patient", patient));
    PatientNuisance& nuisance = result.nuisances[patient];
    nuisance.gain_db = 6.0 * cfg.nuisance_strength * patient_rng.uniform(-1.0, 1.0);
    nuisance.tilt_db_per_octave = 3.0 * cfg.nuisance_strength * patient_rng.uniform(-1.0, 1.0);
    nuisance.resonance_hz =
        kResonanceBaseHz * (1.0 + 0.15 * cfg.nuisance_strength * patient_rng.uniform(-1.0, 1.0));

    std::vector<ClassLabel4> labels;
    for (int c = 0; c < 4; ++c)
      labels.insert(labels.end(), counts[static_cast<std::size_t>(c)], kAllLabels4[static_cast<std::size_t>(c)]);
    patient_rng.shuffle(labels);

    for (int s = 0; s < cfg.samples_per_patient; ++s) {
      Rng sample_rng(derive_seed(cfg.seed, "synth-sample",
                                 static_cast<std::uint64_t>(patient) * 1000003ull +
                                     static_cast<std::uint64_t>(s)));
      SynthSample sample;
      char id[32];
      std::snprintf(id, sizeof(id), "p%03u_s%03d", patient, s);
      sample.meta.sample_id = id;
      sample.meta.patient = patient;
      sample.meta.label = labels[static_cast<std::size_t>(s)];
      sample.meta.split = split_of[patient];
      sample.meta.source_path = std::string(id) + ".wav";
      sample.meta.cycle_start_s = 0.0;
      sample.meta.cycle_end_s =
          static_cast<double>(kSynthSamplesLen) / static_cast<double>(kTargetRateHz);
      sample.waveform.rate_hz = kTargetRateHz;
      sample.waveform.samples = synthesize_waveform(sample.meta.label, nuisance, sample_rng);
      result.manifest.rows.push_back(sample.meta);
      result.samples.push_back(std::move(sample));
    }
  }
  return result;
}

}  // namespace pafa
