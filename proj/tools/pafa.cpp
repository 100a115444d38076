// pafa: command line front end for the patient-aware feature alignment
// training framework. Subcommands cover data synthesis, ICBHI ingestion,
// feature extraction, gradient verification, training, evaluation, the
// ablation grid, embedding export and the nearest-patient analysis.

#include <cstdlib>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "pafa/eval.hpp"
#include "pafa/feature_store.hpp"
#include "pafa/ingest.hpp"
#include "pafa/losses.hpp"
#include "pafa/trainer.hpp"
#include "pafa/wav.hpp"

namespace {

using namespace pafa;

std::filesystem::path default_cache_dir(const std::string& cache_flag,
                                        const std::filesystem::path& manifest_path) {
  if (!cache_flag.empty()) return cache_flag;
  if (const char* env = std::getenv("PAFA_CACHE_DIR"); env && *env) return env;
  return manifest_path.parent_path() / "feature_cache";
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
  }
  if (seeds.empty()) throw ParseError("empty seed list");
  return seeds;
}

std::array<double, 4> parse_class_mix(const std::string& text) {
  std::array<double, 4> mix{};
  std::stringstream in(text);
  std::string tok;
  std::size_t i = 0;
  while (std::getline(in, tok, ',')) {
    if (i >= 4) throw ParseError("class mix needs exactly 4 probabilities");
    mix[i++] = std::stod(tok);
  }
  if (i != 4) throw ParseError("class mix needs exactly 4 probabilities");
  return mix;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(std::stoi(tok));
  if (out.empty()) throw ParseError("empty integer list");
  return out;
}

struct TrainFlags {
  std::string manifest;
  std::string cache;
  std::string variant = "full";
  std::uint64_t seed = 1;
  int epochs = -1;
  double lr = -1;
  double weight_decay = -1;
  int batch_size = -1;
  double lambda_pcsl = -1;
  double lambda_gpal = -1;
  double epsilon = -1;
  std::string sampler;
  int pk_patients = -1;
  int pk_samples = -1;
  std::string hidden;
  int proj_dim = -1;
  bool full_scale = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--manifest", f.manifest, "manifest CSV path")->required();
  cmd->add_option("--cache", f.cache, "feature cache directory (default: PAFA_CACHE_DIR)");
  cmd->add_option("--variant", f.variant, "full|ce_only|no_pcsl|no_gpal");
  cmd->add_option("--seed", f.seed, "training seed");
  cmd->add_option("--epochs", f.epochs, "number of epochs");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--weight-decay", f.weight_decay, "decoupled weight decay");
  cmd->add_option("--batch-size", f.batch_size, "batch size");
  cmd->add_option("--lambda-pcsl", f.lambda_pcsl, "PCSL weight");
  cmd->add_option("--lambda-gpal", f.lambda_gpal, "GPAL weight");
  cmd->add_option("--epsilon", f.epsilon, "PCSL denominator epsilon");
  cmd->add_option("--sampler", f.sampler, "pk|shuffle");
  cmd->add_option("--pk-patients", f.pk_patients, "patients per batch in pk mode");
  cmd->add_option("--pk-samples", f.pk_samples, "samples per patient in pk mode");
  cmd->add_option("--hidden", f.hidden, "encoder widths, e.g. 256,64");
  cmd->add_option("--proj-dim", f.proj_dim, "projection head output dimension");
  cmd->add_flag("--full-scale", f.full_scale,
                "paper-scale defaults (lr 5e-5, 100 epochs, d=128) instead of desk scale");
}

TrainConfig resolve_train_config(const TrainFlags& f) {
  TrainConfig cfg = f.full_scale ? TrainConfig{} : desk_scale_config();
  cfg.variant = parse_variant(f.variant);
  cfg.seed = f.seed;
  if (f.epochs >= 0) cfg.epochs = f.epochs;
  if (f.lr >= 0) cfg.lr = f.lr;
  if (f.weight_decay >= 0) cfg.weight_decay = f.weight_decay;
  if (f.batch_size >= 0) cfg.batch_size = f.batch_size;
  if (f.lambda_pcsl >= 0) cfg.weights.lambda_pcsl = f.lambda_pcsl;
  if (f.lambda_gpal >= 0) cfg.weights.lambda_gpal = f.lambda_gpal;
  if (f.epsilon >= 0) cfg.weights.epsilon = f.epsilon;
  if (!f.sampler.empty())
    cfg.sampler.kind =
        f.sampler == "shuffle" ? SamplerConfig::Kind::Shuffle : SamplerConfig::Kind::Pk;
  if (f.pk_patients >= 0) cfg.sampler.patients = f.pk_patients;
  if (f.pk_samples >= 0) cfg.sampler.samples = f.pk_samples;
  if (!f.hidden.empty()) cfg.model.hidden = parse_int_list(f.hidden);
  if (f.proj_dim >= 0) cfg.model.proj_dim = f.proj_dim;
  return cfg;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"patient-aware feature alignment trainer"};
  app.require_subcommand(1);

  // --- synth ---------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic patient-variability dataset");
  std::string synth_out;
  SynthConfig synth_cfg;
  std::string synth_mix;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--patients", synth_cfg.n_patients, "number of patients");
  synth->add_option("--samples-per-patient", synth_cfg.samples_per_patient, "samples per patient");
  synth->add_option("--seed", synth_cfg.seed, "generator seed");
  synth->add_option("--class-mix", synth_mix, "4 comma-separated probabilities");
  synth->add_option("--nuisance", synth_cfg.nuisance_strength, "nuisance strength");
  synth->set_config("--config");
  synth->callback([&] {
    if (!synth_mix.empty()) synth_cfg.class_mix = parse_class_mix(synth_mix);
    const auto result = generate_synthetic(synth_cfg);
    std::filesystem::create_directories(synth_out);
    for (const auto& sample : result.samples)
      write_wav16(std::filesystem::path(synth_out) / sample.meta.source_path, sample.waveform);
    const auto manifest_path = std::filesystem::path(synth_out) / "manifest.csv";
    save_manifest_csv(manifest_path, result.manifest);
    std::size_t train = 0, test = 0;
    for (const auto& row : result.manifest.rows)
      (row.split == Split::Train ? train : test) += 1;
    std::cout << "RESULT samples=" << result.samples.size() << " train_rows=" << train
              << " test_rows=" << test << " manifest=" << manifest_path.string() << "\n";
  });

  // --- prepare ---------------------------------------------------------------
  auto* prepare = app.add_subcommand("prepare", "build a manifest from an ICBHI directory");
  std::string prep_root, prep_split_file, prep_out;
  double prep_fraction = 0.6;
  std::uint64_t prep_seed = 1;
  bool prep_random = false;
  prepare->add_option("--root", prep_root, "directory of paired .wav/.txt files")->required();
  prepare->add_option("--out", prep_out, "output manifest path")->required();
  prepare->add_option("--split-file", prep_split_file, "official split file (basename train|test)");
  prepare->add_flag("--random-split", prep_random, "subject-disjoint random split");
  prepare->add_option("--train-fraction", prep_fraction, "train fraction for --random-split");
  prepare->add_option("--seed", prep_seed, "seed for --random-split");
  prepare->set_config("--config");
  prepare->callback([&] {
    SplitSource source;
    if (!prep_split_file.empty())
      source = OfficialSplitFile{prep_split_file};
    else if (prep_random)
      source = RandomSplit{prep_fraction, prep_seed};
    else
      throw DataError("prepare needs --split-file or --random-split");
    const auto result = build_manifest(prep_root, source);
    save_manifest_csv(prep_out, result.manifest);
    for (const auto& s : result.skipped) std::cerr << "skipped: " << s << "\n";
    const auto report = validate_manifest(result.manifest);
    for (const auto& issue : report.issues)
      std::cerr << (issue.severity == ValidationIssue::Severity::Error ? "error: " : "warning: ")
                << issue.rule << ": " << issue.message << "\n";

    std::map<Split, std::array<std::size_t, 4>> counts;
    for (const auto& row : result.manifest.rows)
      ++counts[row.split][static_cast<std::size_t>(row.label)];
    auto total = [](const std::array<std::size_t, 4>& c) {
      return c[0] + c[1] + c[2] + c[3];
    };
    std::cout << "RESULT train=" << total(counts[Split::Train])
              << " test=" << total(counts[Split::Test]);
    for (int c = 0; c < 4; ++c)
      std::cout << " train_" << to_string(static_cast<ClassLabel4>(c)) << "="
                << counts[Split::Train][static_cast<std::size_t>(c)];
    for (int c = 0; c < 4; ++c)
      std::cout << " test_" << to_string(static_cast<ClassLabel4>(c)) << "="
                << counts[Split::Test][static_cast<std::size_t>(c)];
    std::cout << " skipped=" << result.skipped.size() << " manifest=" << prep_out << "\n";
  });

  // --- features ----------------------------------------------------------------
  auto* feat = app.add_subcommand("features", "extract and cache fbank features");
  std::string feat_manifest, feat_cache;
  int feat_jobs = 1;
  feat->add_option("--manifest", feat_manifest, "manifest CSV path")->required();
  feat->add_option("--cache", feat_cache, "cache directory (default: PAFA_CACHE_DIR)");
  feat->add_option("--jobs", feat_jobs, "parallel extraction workers");
  feat->set_config("--config");
  feat->callback([&] {
    const std::filesystem::path manifest_path(feat_manifest);
    const auto manifest = load_manifest_csv(manifest_path);
    const auto cache = default_cache_dir(feat_cache, manifest_path);
    const auto written = extract_features(manifest, manifest_path.parent_path(), cache, feat_jobs);
    std::cout << "RESULT cached=" << written << " total=" << manifest.rows.size()
              << " cache_dir=" << cache.string() << "\n";
  });

  // --- gradcheck ---------------------------------------------------------------
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the loss gradients");
  GradCheckConfig grad_cfg;
  grad->add_option("--trials", grad_cfg.trials, "number of random batches");
  grad->add_option("--batch", grad_cfg.batch, "batch size");
  grad->add_option("--dim", grad_cfg.dim, "embedding dimension");
  grad->add_option("--min-patients", grad_cfg.min_patients, "min distinct patients per batch");
  grad->add_option("--max-patients", grad_cfg.max_patients, "max distinct patients per batch");
  grad->add_option("--step", grad_cfg.step, "central difference step");
  grad->add_option("--tol", grad_cfg.tolerance, "max relative error tolerance");
  grad->add_option("--seed", grad_cfg.seed, "batch generator seed");
  grad->add_option("--lambda-pcsl", grad_cfg.weights.lambda_pcsl, "PCSL weight");
  grad->add_option("--lambda-gpal", grad_cfg.weights.lambda_gpal, "GPAL weight");
  grad->set_config("--config");
  grad->callback([&] {
    const auto report = run_gradient_check(grad_cfg);
    std::cout << report.table();
    std::cout << "RESULT max_rel_err=" << report.max_rel_err << " tol=" << report.tolerance
              << " pass=" << (report.pass ? 1 : 0) << "\n";
    if (!report.pass) throw NumericError("gradient check failed");
  });

  // --- train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train one model end to end");
  TrainFlags train_flags;
  std::string train_run_dir;
  add_train_flags(train_cmd, train_flags);
  train_cmd->add_option("--run-dir", train_run_dir, "output run directory")->required();
  train_cmd->set_config("--config");
  train_cmd->callback([&] {
    const std::filesystem::path manifest_path(train_flags.manifest);
    const auto manifest = load_manifest_csv(manifest_path);
    const CachedFeatureStore store(default_cache_dir(train_flags.cache, manifest_path));
    const auto cfg = resolve_train_config(train_flags);
    const auto record = train(cfg, manifest, store, train_run_dir);
    std::cout << "RESULT run_dir=" << record.run_dir.string()
              << " epochs=" << record.epochs.size();
    if (record.has_metrics)
      std::cout << " sp=" << format_percent(record.metrics4.sp)
                << " se=" << format_percent(record.metrics4.se)
                << " score=" << format_percent(record.metrics4.score)
                << " score2=" << format_percent(record.metrics2.score);
    std::cout << " wall_s=" << record.wall_seconds << "\n";
  });

  // --- eval ---------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "compute Se/Sp/Score for a run or prediction file");
  std::string eval_run_dir, eval_manifest, eval_cache, eval_preds, eval_task = "4class";
  std::string eval_split = "test";
  eval_cmd->add_option("--run-dir", eval_run_dir, "run directory with checkpoint.pafc");
  eval_cmd->add_option("--manifest", eval_manifest, "manifest CSV path");
  eval_cmd->add_option("--cache", eval_cache, "feature cache directory");
  eval_cmd->add_option("--preds", eval_preds, "predictions CSV (sample_id,patient,label,pred)");
  eval_cmd->add_option("--task", eval_task, "4class|2class");
  eval_cmd->add_option("--split", eval_split, "train|test split to evaluate");
  eval_cmd->set_config("--config");
  eval_cmd->callback([&] {
    Predictions predictions;
    if (!eval_preds.empty()) {
      predictions = load_predictions_csv(eval_preds);
    } else {
      if (eval_run_dir.empty() || eval_manifest.empty())
        throw DataError("eval needs --preds or both --run-dir and --manifest");
      const std::filesystem::path manifest_path(eval_manifest);
      const auto manifest = load_manifest_csv(manifest_path);
      const CachedFeatureStore store(default_cache_dir(eval_cache, manifest_path));
      const auto params =
          load_checkpoint(std::filesystem::path(eval_run_dir) / "checkpoint.pafc");
      predictions = predict(params, rows_in_split(manifest, parse_split(eval_split)), store);
    }
    MetricTriple m;
    if (eval_task == "4class")
      m = se_sp_score(confusion(predictions.preds, predictions.labels, kNumClasses4));
    else if (eval_task == "2class")
      m = eval_two_class_from_four(predictions.preds, predictions.labels);
    else
      throw DataError("unknown task '" + eval_task + "'");
    std::cout << "RESULT task=" << eval_task << " n=" << predictions.preds.size()
              << " sp=" << format_percent(m.sp) << " se=" << format_percent(m.se)
              << " score=" << format_percent(m.score) << "\n";
  });

  // --- ablate ---------------------------------------------------------------
  auto* ablate = app.add_subcommand("ablate", "run the variant x seed ablation grid");
  TrainFlags ablate_flags;
  std::string ablate_out, ablate_seeds = "1", ablate_variants = "full,ce_only,no_pcsl,no_gpal";
  add_train_flags(ablate, ablate_flags);
  ablate->add_option("--out", ablate_out, "output directory")->required();
  ablate->add_option("--seeds", ablate_seeds, "comma-separated seeds");
  ablate->add_option("--variants", ablate_variants, "comma-separated variants");
  ablate->set_config("--config");
  ablate->callback([&] {
    const std::filesystem::path manifest_path(ablate_flags.manifest);
    const auto manifest = load_manifest_csv(manifest_path);
    const CachedFeatureStore store(default_cache_dir(ablate_flags.cache, manifest_path));
    const auto base = resolve_train_config(ablate_flags);
    const auto seeds = parse_seed_list(ablate_seeds);
    std::vector<Variant> variants;
    std::stringstream in(ablate_variants);
    std::string tok;
    while (std::getline(in, tok, ',')) variants.push_back(parse_variant(tok));
    const auto rows = run_ablation(manifest, store, base, seeds, variants, ablate_out);
    std::cout << "RESULT rows=" << rows.size()
              << " table=" << (std::filesystem::path(ablate_out) / "ablation.csv").string()
              << " summary="
              << (std::filesystem::path(ablate_out) / "ablation_summary.csv").string() << "\n";
  });

  // --- export-embeddings -----------------------------------------------------
  auto* exp = app.add_subcommand("export-embeddings", "write projection-head embeddings to CSV");
  std::string exp_run_dir, exp_manifest, exp_cache, exp_split = "test", exp_out;
  exp->add_option("--run-dir", exp_run_dir, "run directory with checkpoint.pafc")->required();
  exp->add_option("--manifest", exp_manifest, "manifest CSV path")->required();
  exp->add_option("--cache", exp_cache, "feature cache directory");
  exp->add_option("--split", exp_split, "train|test|all");
  exp->add_option("--out", exp_out, "output CSV path")->required();
  exp->set_config("--config");
  exp->callback([&] {
    const std::filesystem::path manifest_path(exp_manifest);
    const auto manifest = load_manifest_csv(manifest_path);
    const CachedFeatureStore store(default_cache_dir(exp_cache, manifest_path));
    const auto params = load_checkpoint(std::filesystem::path(exp_run_dir) / "checkpoint.pafc");
    std::vector<SampleMeta> rows =
        exp_split == "all" ? manifest.rows : rows_in_split(manifest, parse_split(exp_split));
    if (!params.has_projection())
      std::cerr << "warning: stripped checkpoint, exporting encoder outputs\n";
    const auto report = export_embeddings(params, rows, store, exp_out);
    for (const auto& id : report.missing) std::cerr << "missing features: " << id << "\n";
    std::cout << "RESULT rows=" << report.rows_written << " missing=" << report.missing.size()
              << " fallback=" << (report.used_encoder_fallback ? 1 : 0) << " out=" << exp_out
              << "\n";
  });

  // --- patient-analysis -------------------------------------------------------
  auto* analysis = app.add_subcommand(
      "patient-analysis", "rank test patients nearest to reference centroids, compare runs");
  std::string ana_refs, ana_run, ana_compare, ana_manifest, ana_cache;
  int ana_k = 6;
  analysis->add_option("--refs", ana_refs, "reference centroid CSV (name,c0..c{d-1})")->required();
  analysis->add_option("--run-dir", ana_run, "run directory providing embeddings + predictions")
      ->required();
  analysis->add_option("--compare", ana_compare, "second run directory for accuracy deltas");
  analysis->add_option("--manifest", ana_manifest, "manifest CSV path")->required();
  analysis->add_option("--cache", ana_cache, "feature cache directory");
  analysis->add_option("--k", ana_k, "number of nearest patients");
  analysis->set_config("--config");
  analysis->callback([&] {
    const std::filesystem::path manifest_path(ana_manifest);
    const auto manifest = load_manifest_csv(manifest_path);
    const CachedFeatureStore store(default_cache_dir(ana_cache, manifest_path));
    const auto params = load_checkpoint(std::filesystem::path(ana_run) / "checkpoint.pafc");
    const auto rows = rows_in_split(manifest, Split::Test);
    if (rows.empty()) throw DataError("manifest has no test rows");

    const auto refs = load_reference_centroids(ana_refs);
    if (refs.empty()) throw DataError("no reference centroids in " + ana_refs);
    MatrixX<double> ref_matrix(static_cast<Index>(refs.size()), refs[0].value.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (refs[i].value.size() != ref_matrix.cols())
        throw DataError("reference centroid dimensions disagree");
      ref_matrix.row(static_cast<Index>(i)) = refs[i].value.transpose();
    }

    // Projection-head embeddings for every test sample.
    std::vector<const MatrixX<float>*> inputs;
    std::vector<std::uint32_t> patients;
    for (const auto& row : rows) {
      inputs.push_back(&store.get(row.sample_id));
      patients.push_back(row.patient);
    }
    const auto fw = forward(params, inputs);
    const MatrixX<double> embeddings = params.has_projection()
                                           ? fw.proj.cast<double>()
                                           : fw.encoder_out.cast<double>();
    if (embeddings.cols() != ref_matrix.cols())
      throw DataError("reference centroid dimension " + std::to_string(ref_matrix.cols()) +
                      " does not match embedding dimension " + std::to_string(embeddings.cols()));

    const auto nearest = nearest_test_patients(ref_matrix, embeddings, patients, ana_k);
    std::cout << "patient, distance\n";
    for (const auto& n : nearest) std::cout << n.patient << ", " << n.distance << "\n";

    std::string id_list;
    for (const auto& n : nearest) {
      if (!id_list.empty()) id_list += ",";
      id_list += std::to_string(n.patient);
    }

    if (!ana_compare.empty()) {
      const auto preds_a =
          load_predictions_csv(std::filesystem::path(ana_run) / "predictions.csv");
      const auto preds_b =
          load_predictions_csv(std::filesystem::path(ana_compare) / "predictions.csv");
      if (preds_a.sample_ids != preds_b.sample_ids)
        throw DataError("the two runs were evaluated on different samples");
      std::vector<std::uint32_t> selected;
      for (const auto& n : nearest) selected.push_back(n.patient);
      const auto deltas = compare_runs(preds_a.preds, preds_b.preds, preds_a.labels,
                                       preds_a.patients, selected);
      std::cout << "patient, acc_a, acc_b, delta\n";
      for (const auto& d : deltas)
        std::cout << d.patient << ", " << format_percent(d.accuracy_a) << ", "
                  << format_percent(d.accuracy_b) << ", " << format_percent(d.delta) << "\n";
    }
    std::cout << "RESULT nearest=" << id_list << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
