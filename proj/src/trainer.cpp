#include "pafa/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "pafa/rng.hpp"

namespace pafa {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw DataError("cannot format double");
  return std::string(buf, ptr);
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::CeOnly: return "ce_only";
    case Variant::NoPcsl: return "no_pcsl";
    case Variant::NoGpal: return "no_gpal";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  if (text == "full") return Variant::Full;
  if (text == "ce_only") return Variant::CeOnly;
  if (text == "no_pcsl") return Variant::NoPcsl;
  if (text == "no_gpal") return Variant::NoGpal;
  throw ParseError("unknown variant: '" + std::string(text) + "'");
}

LossWeights effective_weights(Variant variant, const LossWeights& base) {
  LossWeights w = base;
  if (variant == Variant::CeOnly || variant == Variant::NoPcsl) w.lambda_pcsl = 0.0;
  if (variant == Variant::CeOnly || variant == Variant::NoGpal) w.lambda_gpal = 0.0;
  return w;
}

TrainConfig desk_scale_config() {
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.lr = 3e-3;
  cfg.model.hidden = {256, 64};
  cfg.model.proj_dim = 64;
  return cfg;
}

std::vector<TrainBatch> make_batches(const std::vector<SampleMeta>& train_rows,
                                     const SamplerConfig& sampler, int batch_size,
                                     std::uint64_t seed, int epoch) {
  if (train_rows.empty()) throw DataError("no training samples");
  Rng rng(derive_seed(seed, "batches", static_cast<std::uint64_t>(epoch)));
  std::vector<TrainBatch> batches;

  if (sampler.kind == SamplerConfig::Kind::Shuffle) {
    std::vector<std::size_t> order(train_rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      TrainBatch b;
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      std::vector<std::uint32_t> assignment;
      for (std::size_t i = start; i < stop; ++i) {
        b.rows.push_back(order[i]);
        assignment.push_back(train_rows[order[i]].patient);
      }
      b.groups = PatientGroups::from_assignment(assignment);
      batches.push_back(std::move(b));
    }
    return batches;
  }

  // pk mode.
  if (sampler.patients * sampler.samples != batch_size)
    throw DataError("pk sampler requires batch_size = P*K");
  std::map<std::uint32_t, std::vector<std::size_t>> by_patient;
  for (std::size_t i = 0; i < train_rows.size(); ++i)
    by_patient[train_rows[i].patient].push_back(i);
  std::vector<std::uint32_t> patient_ids;
  for (const auto& [id, rows] : by_patient) patient_ids.push_back(id);
  if (patient_ids.size() < static_cast<std::size_t>(sampler.patients))
    throw DataError("pk sampler needs at least " + std::to_string(sampler.patients) +
                    " patients, have " + std::to_string(patient_ids.size()) +
                    "; use the shuffle sampler instead");

  const std::size_t n_batches =
      (train_rows.size() + static_cast<std::size_t>(batch_size) - 1) /
      static_cast<std::size_t>(batch_size);
  for (std::size_t bi = 0; bi < n_batches; ++bi) {
    TrainBatch b;
    std::vector<std::uint32_t> pool = patient_ids;
    rng.shuffle(pool);
    std::vector<std::uint32_t> assignment;
    for (int p = 0; p < sampler.patients; ++p) {
      const std::uint32_t patient = pool[static_cast<std::size_t>(p)];
      std::vector<std::size_t> rows = by_patient[patient];
      rng.shuffle(rows);
      for (int k = 0; k < sampler.samples; ++k) {
        const std::size_t row = k < static_cast<int>(rows.size())
                                    ? rows[static_cast<std::size_t>(k)]
                                    : rows[rng.below(rows.size())];
        b.rows.push_back(row);
        assignment.push_back(patient);
      }
    }
    b.groups = PatientGroups::from_assignment(assignment);
    batches.push_back(std::move(b));
  }
  return batches;
}

namespace {

void write_epochs_csv(const std::filesystem::path& path, const std::vector<EpochStats>& epochs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open epochs.csv for writing: " + path.string());
  out << "epoch,ce,pcsl,gpal,total\n";
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    out << e << ',' << shortest(epochs[e].ce) << ',' << shortest(epochs[e].pcsl) << ','
        << shortest(epochs[e].gpal) << ',' << shortest(epochs[e].total) << "\n";
  }
  if (!out) throw IoError("epochs.csv write failed: " + path.string());
}

void append_metrics_line(std::ostream& out, const std::string& task, const MetricTriple& m,
                         std::size_t n, std::uint64_t seed) {
  nlohmann::json j;
  j["task"] = task;
  j["sp"] = m.sp;
  j["se"] = m.se;
  j["score"] = m.score;
  j["n"] = n;
  j["seed"] = seed;
  out << j.dump() << "\n";
}

}  // namespace

void save_train_config(const std::filesystem::path& path, const TrainConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open config for writing: " + path.string());
  out << "variant=" << to_string(cfg.variant) << "\n";
  out << "lr=" << shortest(cfg.lr) << "\n";
  out << "weight_decay=" << shortest(cfg.weight_decay) << "\n";
  out << "epochs=" << cfg.epochs << "\n";
  out << "batch_size=" << cfg.batch_size << "\n";
  out << "lambda_pcsl=" << shortest(cfg.weights.lambda_pcsl) << "\n";
  out << "lambda_gpal=" << shortest(cfg.weights.lambda_gpal) << "\n";
  out << "epsilon=" << shortest(cfg.weights.epsilon) << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "sampler=" << (cfg.sampler.kind == SamplerConfig::Kind::Pk ? "pk" : "shuffle") << "\n";
  out << "sampler_patients=" << cfg.sampler.patients << "\n";
  out << "sampler_samples=" << cfg.sampler.samples << "\n";
  out << "model_frames=" << cfg.model.frames << "\n";
  out << "model_mels=" << cfg.model.mels << "\n";
  out << "model_hidden=";
  for (std::size_t i = 0; i < cfg.model.hidden.size(); ++i)
    out << (i ? "," : "") << cfg.model.hidden[i];
  out << "\n";
  out << "model_classes=" << cfg.model.n_classes << "\n";
  out << "model_proj_dim=" << cfg.model.proj_dim << "\n";
  if (!out) throw IoError("config write failed: " + path.string());
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto pos = line.find('=');
    if (pos == std::string::npos) throw ParseError("bad config line: '" + line + "'");
    kv[line.substr(0, pos)] = line.substr(pos + 1);
  }
  TrainConfig cfg;
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("config missing key '" + key + "'");
    return it->second;
  };
  cfg.variant = parse_variant(get("variant"));
  cfg.lr = std::stod(get("lr"));
  cfg.weight_decay = std::stod(get("weight_decay"));
  cfg.epochs = std::stoi(get("epochs"));
  cfg.batch_size = std::stoi(get("batch_size"));
  cfg.weights.lambda_pcsl = std::stod(get("lambda_pcsl"));
  cfg.weights.lambda_gpal = std::stod(get("lambda_gpal"));
  cfg.weights.epsilon = std::stod(get("epsilon"));
  cfg.seed = std::stoull(get("seed"));
  cfg.sampler.kind =
      get("sampler") == "pk" ? SamplerConfig::Kind::Pk : SamplerConfig::Kind::Shuffle;
  cfg.sampler.patients = std::stoi(get("sampler_patients"));
  cfg.sampler.samples = std::stoi(get("sampler_samples"));
  cfg.model.frames = std::stoi(get("model_frames"));
  cfg.model.mels = std::stoi(get("model_mels"));
  cfg.model.hidden.clear();
  std::istringstream hidden(get("model_hidden"));
  std::string tok;
  while (std::getline(hidden, tok, ',')) cfg.model.hidden.push_back(std::stoi(tok));
  cfg.model.n_classes = std::stoi(get("model_classes"));
  cfg.model.proj_dim = std::stoi(get("model_proj_dim"));
  return cfg;
}

RunRecord train(const TrainConfig& cfg, const Manifest& manifest, const FeatureStore& features,
                const std::filesystem::path& run_dir) {
  const auto start_time = std::chrono::steady_clock::now();
  if (cfg.epochs < 1) throw DataError("epochs must be >= 1");

  const auto train_rows = rows_in_split(manifest, Split::Train);
  const auto test_rows = rows_in_split(manifest, Split::Test);
  if (train_rows.empty()) throw DataError("manifest has no training rows");

  const LossWeights weights = effective_weights(cfg.variant, cfg.weights);
  std::filesystem::create_directories(run_dir);

  auto params = ModelParams<float>::init(cfg.model, cfg.seed);
  auto adam = make_adam_state(params);

  RunRecord record;
  record.config = cfg;
  record.run_dir = run_dir;

  std::vector<int> label_buf;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = make_batches(train_rows, cfg.sampler, cfg.batch_size, cfg.seed, epoch);
    EpochStats stats;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const TrainBatch& batch = batches[bi];
      std::vector<const MatrixX<float>*> inputs;
      label_buf.clear();
      for (std::size_t row : batch.rows) {
        inputs.push_back(&features.get(train_rows[row].sample_id));
        label_buf.push_back(static_cast<int>(train_rows[row].label));
      }

      const auto fw = forward(params, inputs);

      // Loss arithmetic runs in double regardless of the model precision.
      const MatrixX<double> logits_d = fw.logits.cast<double>();
      const auto ce = cross_entropy(logits_d, label_buf);
      const MatrixX<double> proj_d = fw.proj.cast<double>();
      const LossBundle bundle = evaluate_losses(ce.loss, proj_d, batch.groups, weights);

      if (!std::isfinite(bundle.total))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(bi));

      const MatrixX<float> grad_logits = ce.grad_logits.cast<float>();
      const MatrixX<float> grad_proj = bundle.grad_embeddings.cast<float>();
      const auto grads = backward(params, fw, grad_logits, grad_proj);
      adam_step(params, grads, adam, cfg.lr, cfg.weight_decay);

      stats.ce += bundle.ce;
      stats.pcsl += bundle.pcsl;
      stats.gpal += bundle.gpal;
      stats.total += bundle.total;
    }
    const auto n = static_cast<double>(batches.size());
    stats.ce /= n;
    stats.pcsl /= n;
    stats.gpal /= n;
    stats.total /= n;
    record.epochs.push_back(stats);
  }

  save_train_config(run_dir / "config.txt", cfg);
  write_epochs_csv(run_dir / "epochs.csv", record.epochs);
  record.checkpoint_path = run_dir / "checkpoint.pafc";
  save_checkpoint(record.checkpoint_path, params);

  if (!test_rows.empty()) {
    const auto predictions = predict(params, test_rows, features);
    save_predictions_csv(run_dir / "predictions.csv", predictions);
    record.metrics4 = se_sp_score(confusion(predictions.preds, predictions.labels, kNumClasses4));
    record.metrics2 = eval_two_class_from_four(predictions.preds, predictions.labels);
    record.has_metrics = true;
    std::ofstream metrics(run_dir / "metrics.json-lines", std::ios::binary);
    if (!metrics) throw IoError("cannot open metrics file in " + run_dir.string());
    append_metrics_line(metrics, "4class", record.metrics4, predictions.preds.size(), cfg.seed);
    append_metrics_line(metrics, "2class", record.metrics2, predictions.preds.size(), cfg.seed);
  }

  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return record;
}

std::vector<AblationRow> run_ablation(const Manifest& manifest, const FeatureStore& features,
                                      const TrainConfig& base,
                                      std::span<const std::uint64_t> seeds,
                                      std::span<const Variant> variants,
                                      const std::filesystem::path& out_dir) {
  if (seeds.empty()) throw DataError("ablation needs at least one seed");
  if (variants.empty()) throw DataError("ablation needs at least one variant");
  std::filesystem::create_directories(out_dir);

  std::vector<AblationRow> rows;
  for (Variant variant : variants) {
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.variant = variant;
      cfg.seed = seed;
      const auto run_dir =
          out_dir / ("run_" + std::string(to_string(variant)) + "_" + std::to_string(seed));
      const auto record = train(cfg, manifest, features, run_dir);
      if (!record.has_metrics)
        throw DataError("ablation manifest has no test rows to evaluate");
      rows.push_back({variant, seed, record.metrics4});
    }
  }

  {
    std::ofstream out(out_dir / "ablation.csv", std::ios::binary);
    if (!out) throw IoError("cannot open ablation.csv in " + out_dir.string());
    out << "variant,seed,sp,se,score\n";
    for (const auto& row : rows) {
      out << to_string(row.variant) << ',' << row.seed << ',' << format_percent(row.metrics.sp)
          << ',' << format_percent(row.metrics.se) << ',' << format_percent(row.metrics.score)
          << "\n";
    }
  }

  {
    std::ofstream out(out_dir / "ablation_summary.csv", std::ios::binary);
    if (!out) throw IoError("cannot open ablation_summary.csv in " + out_dir.string());
    out << "variant,n,sp_mean,sp_std,se_mean,se_std,score_mean,score_std\n";
    for (Variant variant : variants) {
      std::vector<MetricTriple> ms;
      for (const auto& row : rows)
        if (row.variant == variant) ms.push_back(row.metrics);
      auto mean_std = [&](auto member) {
        double mean = 0;
        for (const auto& m : ms) mean += m.*member;
        mean /= static_cast<double>(ms.size());
        double var = 0;
        for (const auto& m : ms) var += (m.*member - mean) * (m.*member - mean);
        var = ms.size() > 1 ? var / static_cast<double>(ms.size() - 1) : 0.0;
        return std::pair<double, double>(mean, std::sqrt(var));
      };
      const auto [sp_m, sp_s] = mean_std(&MetricTriple::sp);
      const auto [se_m, se_s] = mean_std(&MetricTriple::se);
      const auto [sc_m, sc_s] = mean_std(&MetricTriple::score);
      out << to_string(variant) << ',' << ms.size() << ',' << format_percent(sp_m) << ','
          << format_percent(sp_s) << ',' << format_percent(se_m) << ',' << format_percent(se_s)
          << ',' << format_percent(sc_m) << ',' << format_percent(sc_s) << "\n";
    }
  }
  return rows;
}

}  // namespace pafa
